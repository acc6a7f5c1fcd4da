/** Base64 over Uint8Array, environment-independent (browser and node). */

const ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

const REVERSE: Record<string, number> = {};
for (let i = 0; i < ALPHABET.length; i++) REVERSE[ALPHABET[i]] = i;

export function encodeBase64(bytes: Uint8Array): string {
  let out = "";
  for (let i = 0; i < bytes.length; i += 3) {
    const b0 = bytes[i];
    const b1 = i + 1 < bytes.length ? bytes[i + 1] : 0;
    const b2 = i + 2 < bytes.length ? bytes[i + 2] : 0;
    out += ALPHABET[b0 >> 2];
    out += ALPHABET[((b0 & 3) << 4) | (b1 >> 4)];
    out += i + 1 < bytes.length ? ALPHABET[((b1 & 15) << 2) | (b2 >> 6)] : "=";
    out += i + 2 < bytes.length ? ALPHABET[b2 & 63] : "=";
  }
  return out;
}

export function decodeBase64(text: string): Uint8Array<ArrayBuffer> {
  if (text.length % 4 !== 0) throw new Error("base64 length must be a multiple of 4");
  let padding = 0;
  if (text.endsWith("==")) padding = 2;
  else if (text.endsWith("=")) padding = 1;
  const body = text.slice(0, text.length - padding);
  for (const ch of body) {
    if (!(ch in REVERSE)) throw new Error(`invalid base64 character ${JSON.stringify(ch)}`);
  }
  const out = new Uint8Array((text.length / 4) * 3 - padding);
  let w = 0;
  for (let i = 0; i < text.length; i += 4) {
    const c0 = REVERSE[text[i]] ?? 0;
    const c1 = REVERSE[text[i + 1]] ?? 0;
    const c2 = text[i + 2] === "=" ? 0 : REVERSE[text[i + 2]] ?? 0;
    const c3 = text[i + 3] === "=" ? 0 : REVERSE[text[i + 3]] ?? 0;
    if (w < out.length) out[w++] = (c0 << 2) | (c1 >> 4);
    if (w < out.length) out[w++] = ((c1 & 15) << 4) | (c2 >> 2);
    if (w < out.length) out[w++] = ((c2 & 3) << 6) | c3;
  }
  return out;
}
