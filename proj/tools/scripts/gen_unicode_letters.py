#!/usr/bin/env python3
"""Emits src/unicode_letters.inc: code point ranges of categories L* and M*.

Marks are included because Indic scripts (Bengali among them) spell words
with combining vowel signs.
"""
import sys
import unicodedata


def ranges():
    start = None
    for cp in range(0x110000):
        keep = unicodedata.category(chr(cp))[0] in "LM"
        if keep and start is None:
            start = cp
        elif not keep and start is not None:
            yield start, cp - 1
            start = None
    if start is not None:
        yield start, 0x10FFFF


def main():
    out = sys.stdout
    out.write(f"// Generated by tools/scripts/gen_unicode_letters.py (Unicode {unicodedata.unidata_version}).\n")
    out.write("// Do not edit.\n")
    for lo, hi in ranges():
        out.write(f"{{0x{lo:04X}, 0x{hi:04X}}},\n")


if __name__ == "__main__":
    main()
