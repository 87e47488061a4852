"""PDF parsing and re-serialization for the watermark channels.

The only module that touches PDF syntax.  Scope is the simple-layout
subset the channels need: one page, text drawn with Tj/TJ inside BT/ET,
fonts via Tf, classic cross-reference table.  Content streams may be
plain or Flate-compressed.

Three rules keep the output trustworthy:

- Objects are lexed sequentially and stream bodies are skipped by their
  /Length; stream bytes are never pattern-matched.
- Untouched operators and objects are carried through byte-identical;
  only edited operators are regenerated.
- The numeric-operand threshold decides space versus kerning once, at
  parse time: |operand| > 200 separates words, anything smaller is
  glued into the neighbouring word.
"""

from __future__ import annotations

import json
import warnings
import zlib
from dataclasses import dataclass, field

from .errors import EditConflict, PdfParseError, UnsupportedLayout

__all__ = [
    "SPACE_THRESHOLD",
    "Name",
    "Ref",
    "PdfObject",
    "Word",
    "Space",
    "FontInfo",
    "Edits",
    "DocumentModel",
    "parse",
    "serialize",
    "load",
    "save",
]

SPACE_THRESHOLD = 200

_WHITESPACE = b"\x00\t\n\x0c\r "
_DELIMITERS = b"()<>[]{}/%"


class Name(str):
    """A PDF name; subclasses str so it can key dicts naturally."""


@dataclass(frozen=True)
class Ref:
    num: int
    gen: int


@dataclass
class PdfObject:
    num: int
    gen: int
    raw: bytes
    value: object
    stream_raw: bytes | None = None


# --------------------------------------------------------------------------
# Object-level lexing


class _Lexer:
    def __init__(self, data: bytes, at: int = 0):
        self.data = data
        self.at = at

    def skip_ws(self) -> None:
        data = self.data
        while self.at < len(data):
            c = data[self.at]
            if c in _WHITESPACE:
                self.at += 1
            elif c == 0x25:  # '%' comment runs to end of line
                while self.at < len(data) and data[self.at] not in b"\r\n":
                    self.at += 1
            else:
                return

    def eof(self) -> bool:
        self.skip_ws()
        return self.at >= len(self.data)

    def _bareword(self) -> bytes:
        start = self.at
        data = self.data
        while (
            self.at < len(data)
            and data[self.at] not in _WHITESPACE
            and data[self.at] not in _DELIMITERS
        ):
            self.at += 1
        return data[start : self.at]

    def try_keyword(self, word: bytes) -> bool:
        self.skip_ws()
        save = self.at
        if self._bareword() == word:
            return True
        self.at = save
        return False

    def expect_keyword(self, word: bytes) -> None:
        if not self.try_keyword(word):
            raise PdfParseError(f"expected {word!r} at byte {self.at}")

    def read_name(self) -> Name:
        # caller consumed '/'
        raw = self._bareword()
        out = bytearray()
        i = 0
        while i < len(raw):
            if raw[i : i + 1] == b"#" and i + 3 <= len(raw):
                try:
                    out.append(int(raw[i + 1 : i + 3], 16))
                    i += 3
                    continue
                except ValueError:
                    pass
            out.append(raw[i])
            i += 1
        return Name(out.decode("latin-1"))

    def read_literal_string(self) -> bytes:
        # caller consumed '('
        data = self.data
        out = bytearray()
        depth = 1
        while self.at < len(data):
            c = data[self.at]
            self.at += 1
            if c == 0x5C:  # backslash
                if self.at >= len(data):
                    break
                e = data[self.at]
                self.at += 1
                simple = {
                    0x6E: 10, 0x72: 13, 0x74: 9, 0x62: 8, 0x66: 12,
                    0x28: 0x28, 0x29: 0x29, 0x5C: 0x5C,
                }
                if e in simple:
                    out.append(simple[e])
                elif 0x30 <= e <= 0x37:
                    oct_digits = chr(e)
                    while (
                        len(oct_digits) < 3
                        and self.at < len(data)
                        and 0x30 <= data[self.at] <= 0x37
                    ):
                        oct_digits += chr(data[self.at])
                        self.at += 1
                    out.append(int(oct_digits, 8) & 0xFF)
                elif e in b"\r\n":
                    if e == 0x0D and self.at < len(data) and data[self.at] == 0x0A:
                        self.at += 1
                else:
                    out.append(e)
            elif c == 0x28:
                depth += 1
                out.append(c)
            elif c == 0x29:
                depth -= 1
                if depth == 0:
                    return bytes(out)
                out.append(c)
            else:
                out.append(c)
        raise PdfParseError("unterminated literal string")

    def read_hex_string(self) -> bytes:
        # caller consumed '<'
        data = self.data
        digits = []
        while self.at < len(data):
            c = data[self.at]
            self.at += 1
            if c == 0x3E:
                if len(digits) % 2:
                    digits.append("0")
                return bytes(
                    int("".join(digits[i : i + 2]), 16)
                    for i in range(0, len(digits), 2)
                )
            if chr(c) in "0123456789abcdefABCDEF":
                digits.append(chr(c))
            elif c not in _WHITESPACE:
                raise PdfParseError(f"bad hex digit {chr(c)!r} in string")
        raise PdfParseError("unterminated hex string")

    def read_number(self) -> int | float:
        raw = self._bareword().decode("latin-1")
        try:
            if any(ch in raw for ch in ".eE"):
                return float(raw)
            return int(raw)
        except ValueError as exc:
            raise PdfParseError(f"bad number {raw!r} at byte {self.at}") from exc

    def read_value(self):
        self.skip_ws()
        data = self.data
        if self.at >= len(data):
            raise PdfParseError("unexpected end of file")
        c = data[self.at]
        if c == 0x2F:
            self.at += 1
            return self.read_name()
        if data.startswith(b"<<", self.at):
            self.at += 2
            result = {}
            while True:
                self.skip_ws()
                if data.startswith(b">>", self.at):
                    self.at += 2
                    return result
                if data[self.at] != 0x2F:
                    raise PdfParseError(f"dict key is not a name at byte {self.at}")
                self.at += 1
                key = self.read_name()
                result[key] = self.read_value()
        if c == 0x3C:
            self.at += 1
            return self.read_hex_string()
        if c == 0x28:
            self.at += 1
            return self.read_literal_string()
        if c == 0x5B:
            self.at += 1
            result = []
            while True:
                self.skip_ws()
                if data[self.at : self.at + 1] == b"]":
                    self.at += 1
                    return result
                result.append(self.read_value())
        if c in b"+-.0123456789":
            save = self.at
            number = self.read_number()
            # "N G R" makes an indirect reference
            if isinstance(number, int):
                mark = self.at
                self.skip_ws()
                if self.data[self.at : self.at + 1].isdigit():
                    gen_save = self.at
                    gen = self.read_number()
                    if isinstance(gen, int):
                        after = self.at
                        self.skip_ws()
                        if (
                            self.data[self.at : self.at + 1] == b"R"
                            and self.data[self.at + 1 : self.at + 2]
                            in _WHITESPACE + _DELIMITERS + b""
                        ):
                            self.at += 1
                            return Ref(number, gen)
                    self.at = gen_save
                self.at = mark
            return number
        word = self._bareword()
        if word == b"true":
            return True
        if word == b"false":
            return False
        if word == b"null":
            return None
        raise PdfParseError(f"cannot parse value near byte {self.at}: {word!r}")


# --------------------------------------------------------------------------
# Value serialization (for regenerated objects only)


def escape_string(raw: bytes) -> bytes:
    out = bytearray(b"(")
    for b in raw:
        if b in b"()\\":
            out += b"\\" + bytes([b])
        elif 32 <= b <= 126:
            out.append(b)
        else:
            out += f"\\{b:03o}".encode()
    out += b")"
    return bytes(out)


def _fmt_number(value: int | float) -> bytes:
    if isinstance(value, int) or value == int(value):
        return str(int(value)).encode()
    return f"{value:.6f}".rstrip("0").rstrip(".").encode()


def serialize_value(value) -> bytes:
    if isinstance(value, Name):
        escaped = "".join(
            ch if 33 <= ord(ch) <= 126 and ch not in "()<>[]{}/%#" else f"#{ord(ch):02X}"
            for ch in value
        )
        return b"/" + escaped.encode("latin-1")
    if isinstance(value, bool):
        return b"true" if value else b"false"
    if value is None:
        return b"null"
    if isinstance(value, (int, float)):
        return _fmt_number(value)
    if isinstance(value, bytes):
        return escape_string(value)
    if isinstance(value, Ref):
        return f"{value.num} {value.gen} R".encode()
    if isinstance(value, dict):
        inner = b" ".join(
            serialize_value(Name(k)) + b" " + serialize_value(v)
            for k, v in value.items()
        )
        return b"<< " + inner + b" >>"
    if isinstance(value, list):
        return b"[ " + b" ".join(serialize_value(v) for v in value) + b" ]"
    raise TypeError(f"cannot serialize {type(value).__name__}")


# --------------------------------------------------------------------------
# Document model


@dataclass
class Word:
    index: int
    text: str
    line: int
    op_index: int
    item_span: tuple[int, int]  # [start, end) indices into the op's items
    font: str
    kerns: list[float] = field(default_factory=list)


@dataclass
class Space:
    index: int
    line: int
    op_index: int
    item_index: int
    value: float | None  # TJ operand; None for a space drawn as a glyph
    left_word: int | None
    right_word: int | None

    @property
    def shiftable(self) -> bool:
        return self.value is not None


@dataclass
class FontInfo:
    resource: str
    obj_num: int
    base_font: str
    first_char: int
    last_char: int
    widths: list[float]
    descriptor_num: int | None
    font_file_num: int | None
    missing_width: float = 0.0

    def char_width(self, code: int) -> float:
        if self.first_char <= code <= self.last_char:
            return self.widths[code - self.first_char]
        warnings.warn(f"code {code} outside /Widths of {self.base_font}; using missing width")
        return self.missing_width


@dataclass
class _Op:
    operator: str
    operands: list
    span: tuple[int, int]  # byte range in the decoded content stream


@dataclass
class Edits:
    """What serialize() may change; everything else passes through."""

    word_text: dict[int, str] = field(default_factory=dict)
    space_values: dict[int, float] = field(default_factory=dict)
    code_map: dict[int, int] | None = None  # fontmark byte permutation
    font_file: bytes | None = None
    font_resource: str | None = None  # which font code_map/font_file target


@dataclass
class DocumentModel:
    raw: bytes
    header: bytes
    objects: dict[int, PdfObject]
    object_order: list[int]
    trailer: dict
    content_num: int
    content: bytes
    content_filtered: bool
    ops: list[_Op]
    words: list[Word]
    spaces: list[Space]
    fonts: dict[str, FontInfo]
    line_count: int

    # -- queries ----------------------------------------------------------

    def resolve(self, value):
        while isinstance(value, Ref):
            value = self.objects[value.num].value
        return value

    def word_texts(self) -> list[str]:
        return [w.text for w in self.words]

    def measure(self, text: str, font: str) -> float:
        """Width of ``text`` in glyph-space units (thousandths of em)."""
        info = self.fonts[font]
        return sum(info.char_width(c) for c in text.encode("cp1252", "replace"))

    def word_width(self, word: Word) -> float:
        return self.measure(word.text, word.font) - sum(word.kerns)

    def used_codes(self, font: str) -> list[int]:
        codes: set[int] = set()
        for op_index, op in enumerate(self.ops):
            if op.operator not in ("Tj", "TJ"):
                continue
            if _op_font(self, op_index) not in (font, None):
                continue
            for item in _op_strings(op):
                codes.update(item)
        return sorted(codes)

    def font_bytes(self, font: str) -> bytes | None:
        """The embedded font program, or None if the font is not embedded."""
        info = self.fonts[font]
        if info.font_file_num is None:
            return None
        return _decode_stream(self.objects[info.font_file_num], self.resolve)[0]

    def word_editable(self, index: int) -> bool:
        """Whether the word can be replaced without touching a neighbour.

        Words separated only by a space glyph share a PDF string item,
        and rewriting one would clobber the other.
        """
        w = self.words[index]
        return not any(
            o.index != index
            and o.op_index == w.op_index
            and _spans_overlap(w.item_span, o.item_span)
            for o in self.words
        )

    def line_words(self, line: int) -> list[Word]:
        return [w for w in self.words if w.line == line]

    def to_json(self) -> str:
        return json.dumps(
            {
                "lines": self.line_count,
                "words": [
                    {
                        "index": w.index,
                        "text": w.text,
                        "line": w.line,
                        "font": w.font,
                        "width": self.word_width(w),
                    }
                    for w in self.words
                ],
                "spaces": [
                    {
                        "index": s.index,
                        "line": s.line,
                        "value": s.value,
                        "kind": "operand" if s.shiftable else "glyph",
                        "left": s.left_word,
                        "right": s.right_word,
                    }
                    for s in self.spaces
                ],
            },
            indent=2,
        )


def _op_strings(op: _Op):
    if op.operator == "Tj":
        yield op.operands[0]
    elif op.operator == "TJ":
        for item in op.operands[0]:
            if isinstance(item, bytes):
                yield item


# --------------------------------------------------------------------------
# File-level parse


def parse(data: bytes, threshold: float = SPACE_THRESHOLD) -> DocumentModel:
    if not data.startswith(b"%PDF"):
        raise PdfParseError("missing %PDF header")
    header_end = data.index(b"\n", 0) + 1
    # binary-marker comment line, if present
    if data[header_end : header_end + 1] == b"%":
        header_end = data.index(b"\n", header_end) + 1
    header = data[:header_end]

    lexer = _Lexer(data, header_end)
    objects: dict[int, PdfObject] = {}
    order: list[int] = []
    trailer: dict = {}
    while not lexer.eof():
        save = lexer.at
        if lexer.try_keyword(b"xref"):
            # the table is rebuilt on write, so skip ahead to the trailer
            end = data.find(b"trailer", lexer.at)
            if end < 0:
                raise PdfParseError("xref table without trailer")
            lexer.at = end
            continue
        if lexer.try_keyword(b"trailer"):
            chunk = lexer.read_value()
            if not isinstance(chunk, dict):
                raise PdfParseError("trailer is not a dictionary")
            for key, value in chunk.items():
                trailer.setdefault(key, value)
            continue
        if lexer.try_keyword(b"startxref"):
            lexer.skip_ws()
            lexer.read_number()
            continue
        lexer.at = save
        lexer.skip_ws()
        start = lexer.at
        num = lexer.read_value()
        gen = lexer.read_value()
        if not (isinstance(num, int) and isinstance(gen, int)):
            raise PdfParseError(f"expected an indirect object at byte {start}")
        lexer.expect_keyword(b"obj")
        value = lexer.read_value()
        stream_raw = None
        lexer.skip_ws()
        if lexer.try_keyword(b"stream"):
            if data[lexer.at : lexer.at + 2] == b"\r\n":
                lexer.at += 2
            elif data[lexer.at : lexer.at + 1] == b"\n":
                lexer.at += 1
            length = value.get("Length") if isinstance(value, dict) else None
            if isinstance(length, Ref):
                raise PdfParseError(
                    f"object {num}: indirect stream /Length is not supported"
                )
            if not isinstance(length, int):
                raise PdfParseError(f"object {num}: stream without integer /Length")
            stream_raw = data[lexer.at : lexer.at + length]
            if len(stream_raw) != length:
                raise PdfParseError(f"object {num}: stream truncated")
            lexer.at += length
            lexer.expect_keyword(b"endstream")
        lexer.expect_keyword(b"endobj")
        objects[num] = PdfObject(num, gen, data[start : lexer.at], value, stream_raw)
        order.append(num)

    if "Encrypt" in trailer:
        raise UnsupportedLayout("encrypted documents are not supported", location="trailer")
    if "Root" not in trailer:
        raise PdfParseError("trailer has no /Root")

    def resolve(value):
        while isinstance(value, Ref):
            value = objects[value.num].value
        return value

    catalog = resolve(trailer["Root"])
    pages = resolve(catalog["Pages"])
    kids = [resolve(k) for k in pages["Kids"]]
    if len(kids) != 1:
        raise UnsupportedLayout(
            f"expected a single page, found {len(kids)}", location="/Pages"
        )
    page = kids[0]

    contents = page.get("Contents")
    if isinstance(contents, list):
        if len(contents) != 1:
            raise UnsupportedLayout(
                "multiple content streams on one page", location="/Contents"
            )
        contents = contents[0]
    if not isinstance(contents, Ref):
        raise PdfParseError("page /Contents must be an indirect stream")
    content_obj = objects[contents.num]
    content, filtered = _decode_stream(content_obj, resolve)

    fonts = _parse_fonts(page, objects, resolve)
    ops = _scan_content(content)
    words, spaces, line_count = _walk_text(ops, fonts, threshold)

    return DocumentModel(
        raw=data,
        header=header,
        objects=objects,
        object_order=order,
        trailer=trailer,
        content_num=contents.num,
        content=content,
        content_filtered=filtered,
        ops=ops,
        words=words,
        spaces=spaces,
        fonts=fonts,
        line_count=line_count,
    )


def _decode_stream(obj: PdfObject, resolve) -> tuple[bytes, bool]:
    filters = resolve(obj.value.get("Filter"))
    if filters is None:
        return obj.stream_raw, False
    if isinstance(filters, Name):
        filters = [filters]
    if list(filters) == ["FlateDecode"]:
        try:
            return zlib.decompress(obj.stream_raw), True
        except zlib.error as exc:
            raise PdfParseError(f"object {obj.num}: bad Flate data: {exc}") from exc
    raise PdfParseError(f"object {obj.num}: unsupported filter {filters!r}")


def _parse_fonts(page: dict, objects, resolve) -> dict[str, FontInfo]:
    resources = resolve(page.get("Resources", {}))
    font_dict = resolve(resources.get("Font", {}))
    fonts = {}
    for resource, ref in font_dict.items():
        if not isinstance(ref, Ref):
            continue
        font = resolve(ref)
        widths = [float(w) for w in resolve(font.get("Widths", []))]
        descriptor_ref = font.get("FontDescriptor")
        descriptor_num = descriptor_ref.num if isinstance(descriptor_ref, Ref) else None
        font_file_num = None
        missing = 0.0
        if descriptor_num is not None:
            descriptor = resolve(descriptor_ref)
            ff = descriptor.get("FontFile2")
            if isinstance(ff, Ref):
                font_file_num = ff.num
            missing = float(descriptor.get("MissingWidth", 0))
        fonts[str(resource)] = FontInfo(
            resource=str(resource),
            obj_num=ref.num,
            base_font=str(font.get("BaseFont", "")),
            first_char=int(font.get("FirstChar", 0)),
            last_char=int(font.get("LastChar", -1)),
            widths=widths,
            descriptor_num=descriptor_num,
            font_file_num=font_file_num,
            missing_width=missing,
        )
    return fonts


# --------------------------------------------------------------------------
# Content-stream scan


_TEXT_OPS = {
    "BT", "ET", "Tf", "Td", "TD", "Tm", "T*", "TL", "Tc", "Tw",
    "Tz", "Ts", "Tr", "Tj", "TJ",
}


def _scan_content(content: bytes) -> list[_Op]:
    lexer = _Lexer(content)
    ops: list[_Op] = []
    operands: list = []
    first_start: int | None = None
    while True:
        lexer.skip_ws()
        if lexer.at >= len(content):
            break
        c = content[lexer.at]
        start = lexer.at
        if c in b"+-.0123456789([</":
            # operands; '<' may open a dict (inline gs parameter)
            operands.append(lexer.read_value())
            if first_start is None:
                first_start = start
        else:
            word = lexer._bareword()
            if not word:
                raise PdfParseError(f"cannot lex content stream at byte {start}")
            op = word.decode("latin-1")
            if op in ("'", '"'):
                raise PdfParseError(f"unsupported text operator {op!r}")
            span_start = first_start if first_start is not None else start
            ops.append(_Op(op, operands, (span_start, lexer.at)))
            operands = []
            first_start = None
    if operands:
        raise PdfParseError("content stream ends with dangling operands")
    return ops


def _walk_text(
    ops: list[_Op], fonts: dict[str, FontInfo], threshold: float
) -> tuple[list[Word], list[Space], int]:
    words: list[Word] = []
    spaces: list[Space] = []
    line = 0
    block_y = 0.0  # baseline within the current BT block; Td is relative
    y_abs: float | None = None  # last baseline compared against
    leading = 0.0
    font: str | None = None

    def move_to(new_y: float, op_index: int) -> None:
        nonlocal block_y, y_abs, line
        block_y = new_y
        if y_abs is None:
            y_abs = new_y  # first positioning establishes the baseline
            return
        if new_y > y_abs:
            raise UnsupportedLayout(
                "text moves up the page; multi-column layouts are not supported",
                location=f"content op {op_index}",
            )
        if new_y < y_abs:
            line += 1
            y_abs = new_y

    for op_index, op in enumerate(ops):
        kind = op.operator
        if kind == "BT":
            block_y = 0.0
        elif kind == "Tf":
            font = str(op.operands[0])
            if font not in fonts:
                raise PdfParseError(f"Tf names unknown font {font!r}")
        elif kind == "Td":
            move_to(block_y + float(op.operands[1]), op_index)
        elif kind == "TD":
            leading = -float(op.operands[1])
            move_to(block_y + float(op.operands[1]), op_index)
        elif kind == "TL":
            leading = float(op.operands[0])
        elif kind == "T*":
            move_to(block_y - leading, op_index)
        elif kind == "Tm":
            move_to(float(op.operands[5]), op_index)
        elif kind in ("Tj", "TJ"):
            if font is None:
                raise PdfParseError(f"text drawn before any Tf (op {op_index})")
            items = op.operands[0] if kind == "TJ" else [op.operands[0]]
            _split_items(items, op_index, line, font, threshold, words, spaces)
    # Positioning ops before the first text leave gaps; renumber densely.
    used = sorted({w.line for w in words} | {s.line for s in spaces})
    remap = {old: new for new, old in enumerate(used)}
    for w in words:
        w.line = remap[w.line]
    for s in spaces:
        s.line = remap[s.line]
    return words, spaces, len(remap)


def _split_items(
    items: list,
    op_index: int,
    line: int,
    font: str,
    threshold: float,
    words: list[Word],
    spaces: list[Space],
) -> None:
    """Split one operator's items into words and spaces.

    A numeric operand beyond the threshold closes the current word; a
    smaller one is kerning and glues the surrounding fragments together.
    A space character inside a string also closes the word, but yields a
    glyph space that no channel may shift.
    """

    def flush(span_end: int) -> None:
        nonlocal current_text, current_kerns, span_start
        if current_text:
            words.append(
                Word(
                    index=len(words),
                    text=current_text,
                    line=line,
                    op_index=op_index,
                    item_span=(span_start, span_end),
                    font=font,
                    kerns=current_kerns,
                )
            )
        current_text = ""
        current_kerns = []
        span_start = span_end

    def add_space(item_index: int, value: float | None) -> None:
        left = len(words) - 1 if words else None
        spaces.append(
            Space(
                index=len(spaces),
                line=line,
                op_index=op_index,
                item_index=item_index,
                value=value,
                left_word=left,
                right_word=None,  # patched once the next word exists
            )
        )

    current_text = ""
    current_kerns: list[float] = []
    span_start = 0
    pending_spaces: list[int] = []

    for item_index, item in enumerate(items):
        if isinstance(item, bytes):
            parts = item.decode("cp1252", "replace").split(" ")
            for k, part in enumerate(parts):
                if k > 0:
                    # a space glyph ends the word inside this very item
                    flush(item_index + 1)
                    add_space(item_index, None)
                    pending_spaces.append(len(spaces) - 1)
                if part:
                    if not current_text:
                        span_start = item_index
                        for s in pending_spaces:
                            spaces[s].right_word = len(words)
                        pending_spaces = []
                    current_text += part
        elif isinstance(item, (int, float)):
            if abs(item) > threshold:
                flush(item_index)
                add_space(item_index, float(item))
                pending_spaces.append(len(spaces) - 1)
            else:
                if current_text:
                    current_kerns.append(float(item))
                # leading kern with no word yet has nothing to glue to
        else:
            raise PdfParseError(
                f"unexpected {type(item).__name__} inside a TJ array"
            )
    flush(len(items))
    # spaces at the very end of the op keep right_word = None


# --------------------------------------------------------------------------
# Serialization with edits


def _rebuild_op(
    op: _Op,
    op_index: int,
    model: DocumentModel,
    word_repl: dict[int, str],
    space_repl: dict[int, float],
    code_map: dict[int, int] | None,
    mapped_font: str | None,
) -> bytes:
    """Regenerate one Tj/TJ operator with edits applied.

    A replaced word collapses its whole item span (fragments plus inner
    kerning) into a single plain string; the new letters make the old
    kerning pairs meaningless.
    """
    items = list(op.operands[0]) if op.operator == "TJ" else [op.operands[0]]
    op_words = [w for w in model.words if w.op_index == op_index]

    span_by_start: dict[int, tuple[int, str]] = {}
    for w in op_words:
        if w.index not in word_repl:
            continue
        for other in op_words:
            if other.index != w.index and _spans_overlap(w.item_span, other.item_span):
                raise EditConflict(
                    f"word {w.index} shares PDF string items with word {other.index}"
                )
        span_by_start[w.item_span[0]] = (w.item_span[1], word_repl[w.index])

    space_by_item = {
        s.item_index: space_repl[s.index]
        for s in model.spaces
        if s.op_index == op_index and s.index in space_repl
    }

    out_items: list = []
    i = 0
    while i < len(items):
        if i in span_by_start:
            end, text = span_by_start[i]
            out_items.append(text.encode("cp1252"))
            i = max(end, i + 1)
            continue
        item = items[i]
        if i in space_by_item and isinstance(item, (int, float)):
            item = space_by_item[i]
        out_items.append(item)
        i += 1

    if code_map and (
        mapped_font is None or _op_font(model, op_index) in (mapped_font, None)
    ):
        out_items = [
            bytes(code_map.get(b, b) for b in item) if isinstance(item, bytes) else item
            for item in out_items
        ]

    if op.operator == "Tj":
        if len(out_items) != 1 or not isinstance(out_items[0], bytes):
            raise EditConflict("cannot turn a Tj into a positioned array")
        return escape_string(out_items[0]) + b" Tj"
    return _join_tj(out_items)


def _join_tj(items: list) -> bytes:
    parts = []
    for item in items:
        if isinstance(item, bytes):
            parts.append(escape_string(item))
        else:
            if parts and not parts[-1].endswith(b")"):
                parts.append(b" ")
            parts.append(_fmt_number(item))
    return b"[" + b"".join(parts) + b"] TJ"


def _spans_overlap(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return a[0] < b[1] and b[0] < a[1]


def _op_font(model: DocumentModel, op_index: int) -> str | None:
    for w in model.words:
        if w.op_index == op_index:
            return w.font
    return None


def _target_font(model: DocumentModel, edits: Edits) -> FontInfo:
    if edits.font_resource is not None:
        if edits.font_resource not in model.fonts:
            raise EditConflict(f"unknown font resource {edits.font_resource!r}")
        return model.fonts[edits.font_resource]
    if len(model.fonts) != 1:
        raise EditConflict("several fonts present; edits must name one")
    return next(iter(model.fonts.values()))


def serialize(model: DocumentModel, edits: Edits | None = None) -> bytes:
    """Re-emit the document, regenerating only what the edits touch."""
    edits = edits or Edits()
    for index in edits.word_text:
        if not 0 <= index < len(model.words):
            raise EditConflict(f"word index {index} does not exist")
    for index in edits.space_values:
        if not 0 <= index < len(model.spaces):
            raise EditConflict(f"space index {index} does not exist")
        if not model.spaces[index].shiftable:
            raise EditConflict(f"space {index} is a glyph space and cannot be shifted")

    touched_ops: set[int] = set()
    for index in edits.word_text:
        touched_ops.add(model.words[index].op_index)
    for index in edits.space_values:
        touched_ops.add(model.spaces[index].op_index)
    if edits.code_map:
        for op_index, op in enumerate(model.ops):
            if op.operator in ("Tj", "TJ") and (
                edits.font_resource is None
                or _op_font(model, op_index) in (edits.font_resource, None)
            ):
                touched_ops.add(op_index)

    new_objects: dict[int, tuple[dict, bytes | None]] = {}

    if touched_ops:
        pieces = []
        cursor = 0
        for op_index, op in enumerate(model.ops):
            start, end = op.span
            pieces.append(model.content[cursor:start])
            if op_index in touched_ops:
                pieces.append(
                    _rebuild_op(
                        op,
                        op_index,
                        model,
                        edits.word_text,
                        edits.space_values,
                        edits.code_map,
                        edits.font_resource,
                    )
                )
            else:
                pieces.append(model.content[start:end])
            cursor = end
        pieces.append(model.content[cursor:])
        new_content = b"".join(pieces)
        obj = model.objects[model.content_num]
        stream = zlib.compress(new_content, 9) if model.content_filtered else new_content
        value = dict(obj.value)
        value[Name("Length")] = len(stream)
        new_objects[model.content_num] = (value, stream)

    if edits.code_map:
        info = _target_font(model, edits)
        font_obj = model.objects[info.obj_num]
        value = dict(font_obj.value)
        widths = list(info.widths)
        for code, source in edits.code_map.items():
            if not info.first_char <= code <= info.last_char:
                raise EditConflict(f"code {code} outside /Widths range")
            widths[code - info.first_char] = info.char_width(source)
        value[Name("Widths")] = [int(w) if w == int(w) else w for w in widths]
        new_objects[info.obj_num] = (value, None)

    if edits.font_file is not None:
        info = _target_font(model, edits)
        if info.font_file_num is None:
            raise EditConflict("font has no embedded file to replace")
        ff_obj = model.objects[info.font_file_num]
        ff_value = dict(ff_obj.value)
        ff_filtered = ff_value.get("Filter") is not None
        stream = zlib.compress(edits.font_file, 9) if ff_filtered else edits.font_file
        ff_value[Name("Length")] = len(stream)
        ff_value[Name("Length1")] = len(edits.font_file)
        new_objects[info.font_file_num] = (ff_value, stream)

    # -- assemble ---------------------------------------------------------
    out = bytearray(model.header)
    offsets: dict[int, int] = {}
    for num in model.object_order:
        obj = model.objects[num]
        offsets[num] = len(out)
        if num in new_objects:
            value, stream = new_objects[num]
            body = f"{num} {obj.gen} obj\n".encode() + serialize_value(value)
            if stream is not None:
                body += b"\nstream\n" + stream + b"\nendstream"
            elif obj.stream_raw is not None:
                body += b"\nstream\n" + obj.stream_raw + b"\nendstream"
            body += b"\nendobj\n"
            out += body
        else:
            out += obj.raw
            if not obj.raw.endswith(b"\n"):
                out += b"\n"
    _append_tail(out, offsets, model.trailer)
    return bytes(out)


def _append_tail(out: bytearray, offsets: dict[int, int], trailer: dict) -> None:
    xref_at = len(out)
    max_num = max(offsets)
    out += f"xref\n0 {max_num + 1}\n".encode()
    out += b"0000000000 65535 f \n"
    for num in range(1, max_num + 1):
        if num in offsets:
            out += f"{offsets[num]:010d} 00000 n \n".encode()
        else:
            out += b"0000000000 65535 f \n"
    merged = dict(trailer)
    merged[Name("Size")] = max_num + 1
    merged.pop("Prev", None)
    out += b"trailer\n" + serialize_value(merged)
    out += f"\nstartxref\n{xref_at}\n%%EOF\n".encode()


def load(path) -> DocumentModel:
    with open(path, "rb") as fh:
        return parse(fh.read())


def save(path, model: DocumentModel, edits: Edits | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(model, edits))


# --------------------------------------------------------------------------
# Document builder (test corpora and demos)


def build_document(
    lines: list[list],
    font_file: bytes | None = None,
    font_size: int = 12,
    leading: int = 14,
    origin: tuple[int, int] = (72, 720),
    base_font: str = "EmbeddedSans",
    compress: bool = False,
) -> bytes:
    """Write a single-page document from word and space descriptions.

    Each line is a list of TJ items: a ``str`` draws a word, a number
    becomes a positioning operand, and a tuple glues its members into
    one kerned word, e.g. ``("b", 1, "ranch")``.  With ``font_file``
    the TrueType program is embedded and /Widths comes from its metrics.
    """
    from .sfnt import SfntFont

    first_char, last_char = 32, 126
    if font_file is not None:
        adv = SfntFont.from_bytes(font_file).char_advances(
            range(first_char, last_char + 1)
        )
        widths = [adv.get(c, 0) for c in range(first_char, last_char + 1)]
    else:
        widths = [500] * (last_char - first_char + 1)

    chunks = [
        b"BT",
        f"/F1 {font_size} Tf".encode(),
        f"{origin[0]} {origin[1]} Td".encode(),
    ]
    for i, line in enumerate(lines):
        if i:
            chunks.append(f"0 -{leading} Td".encode())
        chunks.append(_join_tj(_line_items(line)))
    chunks.append(b"ET")
    content = b"\n".join(chunks) + b"\n"

    name = Name(base_font)
    font_value: dict = {
        Name("Type"): Name("Font"),
        Name("Subtype"): Name("TrueType" if font_file is not None else "Type1"),
        Name("BaseFont"): name if font_file is not None else Name("Helvetica"),
        Name("FirstChar"): first_char,
        Name("LastChar"): last_char,
        Name("Widths"): widths,
        Name("Encoding"): Name("WinAnsiEncoding"),
    }
    if font_file is not None:
        font_value[Name("FontDescriptor")] = Ref(5, 0)

    bodies: dict[int, bytes] = {}

    def emit(num: int, value, stream: bytes | None = None) -> None:
        body = f"{num} 0 obj\n".encode() + serialize_value(value)
        if stream is not None:
            body += b"\nstream\n" + stream + b"\nendstream"
        body += b"\nendobj\n"
        bodies[num] = body

    emit(1, {Name("Type"): Name("Catalog"), Name("Pages"): Ref(2, 0)})
    emit(
        2,
        {Name("Type"): Name("Pages"), Name("Kids"): [Ref(3, 0)], Name("Count"): 1},
    )
    emit(
        3,
        {
            Name("Type"): Name("Page"),
            Name("Parent"): Ref(2, 0),
            Name("MediaBox"): [0, 0, 612, 792],
            Name("Resources"): {Name("Font"): {Name("F1"): Ref(4, 0)}},
            Name("Contents"): Ref(6, 0),
        },
    )
    emit(4, font_value)
    if font_file is not None:
        emit(
            5,
            {
                Name("Type"): Name("FontDescriptor"),
                Name("FontName"): name,
                Name("Flags"): 32,
                Name("FontBBox"): [-1021, -463, 1793, 1232],
                Name("ItalicAngle"): 0,
                Name("Ascent"): 928,
                Name("Descent"): -236,
                Name("CapHeight"): 729,
                Name("StemV"): 80,
                Name("FontFile2"): Ref(7, 0),
            },
        )
    stream = zlib.compress(content, 9) if compress else content
    content_value: dict = {Name("Length"): len(stream)}
    if compress:
        content_value[Name("Filter")] = Name("FlateDecode")
    emit(6, content_value, stream)
    if font_file is not None:
        emit(
            7,
            {Name("Length"): len(font_file), Name("Length1"): len(font_file)},
            font_file,
        )

    out = bytearray(b"%PDF-1.7\n%\xe2\xe3\xcf\xd3\n")
    offsets: dict[int, int] = {}
    for num in sorted(bodies):
        offsets[num] = len(out)
        out += bodies[num]
    _append_tail(out, offsets, {Name("Root"): Ref(1, 0)})
    return bytes(out)


def _line_items(line: list) -> list:
    items: list = []
    for entry in line:
        seq = entry if isinstance(entry, tuple) else (entry,)
        for part in seq:
            if isinstance(part, str):
                items.append(part.encode("cp1252"))
            elif isinstance(part, (int, float)):
                items.append(part)
            else:
                raise TypeError(f"cannot place {type(part).__name__} in a line")
    return items
