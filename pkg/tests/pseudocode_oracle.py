"""Independent straight-from-pseudocode reference coders.

Deliberately literal transcriptions used only as test oracles; the
production module takes arithmetic shortcuts and must agree with these
bit for bit.
"""


def encode_exp_golomb_0_order(x: int) -> str:
    q = bin(x + 1)[2:]
    p = "0" * (len(q) - 1)
    return p + q


def decode_exp_golomb_0_order(x: str) -> tuple[int, int]:
    p = 0
    while x[p] == "0":
        p += 1
    y = int(x[p:2 * p + 1], 2) - 1
    length = 2 * p + 1
    return y, length


def encode_exp_golomb(x: int, k: int) -> str:
    if k == 0:
        return encode_exp_golomb_0_order(x)
    q = x // (2 ** k)
    q_c = encode_exp_golomb_0_order(q)
    r = x % (2 ** k)
    r_c = format(r, f"0{k}b")
    return q_c + r_c


def decode_exp_golomb(x: str, k: int) -> tuple[int, int]:
    if k == 0:
        return decode_exp_golomb_0_order(x)
    q, length = decode_exp_golomb_0_order(x)
    r = int(x[length:length + k], 2)
    y = q * (2 ** k) + r
    return y, length + k


def encode_sparse_exp_golomb(x: int, k: int) -> str:
    if k == 0:
        return encode_exp_golomb(x, k)
    if x == 0:
        return "1"
    return "0" + encode_exp_golomb(x - 1, k)


def decode_sparse_exp_golomb(x: str, k: int) -> tuple[int, int]:
    if k == 0:
        return decode_exp_golomb(x, k)
    if x[0] == "1":
        return 0, 1
    y, length = decode_exp_golomb(x[1:], k)
    return y + 1, length + 1
