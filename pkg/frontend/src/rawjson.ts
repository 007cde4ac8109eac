/**
 * Raw-token JSON walker.
 *
 * The console must display every statistic exactly as the server sent it,
 * byte for byte, so parsing to a JS number and re-formatting is not an
 * option (float round-trips can change the text, and "inf" thresholds are
 * strings). This module walks the raw response text once and records the
 * verbatim source slice of every primitive leaf, keyed by its path, e.g.
 *
 *   rawLeaves('{"analyses":[{"l0":3.0000000000000004}]}')
 *     .get("analyses.0.l0")  ===  "3.0000000000000004"
 *
 * String leaves are recorded with quotes stripped (display form).
 */

export type RawMap = Map<string, string>;

const WS = new Set([" ", "\t", "\n", "\r"]);

class Cursor {
  constructor(public text: string, public i = 0) {}

  skipWs(): void {
    while (this.i < this.text.length && WS.has(this.text[this.i]!)) this.i++;
  }

  peek(): string {
    const ch = this.text[this.i];
    if (ch === undefined) throw new SyntaxError("unexpected end of JSON");
    return ch;
  }

  expect(ch: string): void {
    if (this.text[this.i] !== ch) {
      throw new SyntaxError(`expected '${ch}' at offset ${this.i}`);
    }
    this.i++;
  }
}

function scanString(c: Cursor): string {
  // returns the decoded value; cursor ends past the closing quote
  c.expect('"');
  let out = "";
  for (;;) {
    const ch = c.peek();
    c.i++;
    if (ch === '"') return out;
    if (ch === "\\") {
      const esc = c.peek();
      c.i++;
      switch (esc) {
        case '"': out += '"'; break;
        case "\\": out += "\\"; break;
        case "/": out += "/"; break;
        case "b": out += "\b"; break;
        case "f": out += "\f"; break;
        case "n": out += "\n"; break;
        case "r": out += "\r"; break;
        case "t": out += "\t"; break;
        case "u": {
          const hex = c.text.slice(c.i, c.i + 4);
          c.i += 4;
          out += String.fromCharCode(parseInt(hex, 16));
          break;
        }
        default:
          throw new SyntaxError(`bad escape \\${esc} at offset ${c.i - 1}`);
      }
    } else {
      out += ch;
    }
  }
}

function scanScalarToken(c: Cursor): string {
  // numbers, true, false, null: the raw slice up to a delimiter
  const start = c.i;
  while (c.i < c.text.length) {
    const ch = c.text[c.i]!;
    if (ch === "," || ch === "}" || ch === "]" || WS.has(ch)) break;
    c.i++;
  }
  if (c.i === start) throw new SyntaxError(`empty token at offset ${start}`);
  return c.text.slice(start, c.i);
}

function walk(c: Cursor, path: string, out: RawMap): void {
  c.skipWs();
  const ch = c.peek();
  if (ch === "{") {
    c.i++;
    c.skipWs();
    if (c.peek() === "}") { c.i++; return; }
    for (;;) {
      c.skipWs();
      const key = scanString(c);
      c.skipWs();
      c.expect(":");
      walk(c, path ? `${path}.${key}` : key, out);
      c.skipWs();
      if (c.peek() === ",") { c.i++; continue; }
      c.expect("}");
      return;
    }
  }
  if (ch === "[") {
    c.i++;
    c.skipWs();
    if (c.peek() === "]") { c.i++; return; }
    let idx = 0;
    for (;;) {
      walk(c, path ? `${path}.${idx}` : String(idx), out);
      idx++;
      c.skipWs();
      if (c.peek() === ",") { c.i++; continue; }
      c.expect("]");
      return;
    }
  }
  if (ch === '"') {
    out.set(path, scanString(c));
    return;
  }
  out.set(path, scanScalarToken(c));
}

/** Verbatim source text of every primitive leaf in a JSON document. */
export function rawLeaves(text: string): RawMap {
  const out: RawMap = new Map();
  const c = new Cursor(text);
  walk(c, "", out);
  c.skipWs();
  if (c.i !== text.length) {
    throw new SyntaxError(`trailing content at offset ${c.i}`);
  }
  return out;
}

/** Leaf lookup that throws instead of returning undefined. */
export function rawAt(map: RawMap, path: string): string {
  const v = map.get(path);
  if (v === undefined) throw new Error(`no leaf at ${path}`);
  return v;
}
