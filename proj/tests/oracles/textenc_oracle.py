"""Independent re-implementation of the hashing encoder. Prints the frozen
token lists and the un-normalized signed bucket counts used in
test_textenc.cpp."""
MASK = (1 << 64) - 1
SEP = "\x1e"


def finalize(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def fnv1a(h, data):
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & MASK
    return h


def is_word(c):
    return c is not None and (chr(c).isascii() and chr(c).isalnum() or c >= 0x80)


def tokenize(text):
    b = text.encode("utf-8")
    at = lambda i: b[i] if i < len(b) else None

    def width(i):
        if at(i) == 0xE2 and at(i + 1) == 0x80 and at(i + 2) is not None and 0x80 <= at(i + 2) <= 0xBF:
            return 3
        return 0 if is_word(at(i)) else 1

    def apostrophe(i):
        return at(i) == ord("'") or (at(i) == 0xE2 and at(i + 1) == 0x80 and at(i + 2) == 0x99)

    toks, cur, i = [], bytearray(), 0
    while i < len(b):
        w = width(i)
        if w == 0:
            c = b[i]
            cur.append(ord(chr(c).lower()) if c < 0x80 else c)
            i += 1
            continue
        if apostrophe(i) and cur and i + w < len(b) and width(i + w) == 0:
            cur.append(ord("'"))
        else:
            if cur:
                toks.append(bytes(cur))
            cur = bytearray()
        i += w
    if cur:
        toks.append(bytes(cur))
    return toks


def encode_counts(agent, user, dim=64, orders=(1, 2), seed=0x9F1C3A5D27E4B601):
    seq = tokenize(agent) + [SEP.encode()] + tokenize(user)
    out = [0] * dim
    mix = finalize(seed ^ 0x6A09E667F3BCC909)
    for n in orders:
        for s in range(0, len(seq) - n + 1):
            if n == 1 and seq[s] == SEP.encode():
                continue
            h = 0xCBF29CE484222325 ^ n
            for k in range(n):
                if k:
                    h = fnv1a(h, b"\x1f")
                h = fnv1a(h, seq[s + k])
            h = finalize(h ^ mix)
            out[h % dim] += -1 if h >> 63 else 1
    return out


if __name__ == "__main__":
    for t in ["I like spicy food!", "don't DO that", "It’s a café—really", "", "Tom's  x'  'y"]:
        print(repr(t), [x.decode() for x in tokenize(t)])
    for a, u in [("", "I love spicy food"), ("What do you like?", "I like jazz."), ("", "")]:
        c = encode_counts(a, u)
        print(repr(a), repr(u), {i: v for i, v in enumerate(c) if v})
    c = encode_counts("a", "b c", dim=16, orders=(3,))
    print("order3 dim16", {i: v for i, v in enumerate(c) if v})
