// Decoder for the trace's hex-mirrored radio frames (see docs/protocol.md):
// 10-byte header, JSON payload, CRC-16/X25 trailer.

export interface Frame {
  sysId: number;
  compId: number;
  targetSys: number;
  targetComp: number;
  seq: number;
  msgType: number;
  payload: unknown;
}

export const MSG_TELEMETRY = 1;

const CRC_TABLE: number[] = (() => {
  const table: number[] = [];
  for (let byte = 0; byte < 256; byte++) {
    let crc = byte;
    for (let i = 0; i < 8; i++) {
      crc = crc & 1 ? (crc >> 1) ^ 0x8408 : crc >> 1;
    }
    table.push(crc);
  }
  return table;
})();

export function crc16X25(data: Uint8Array): number {
  let crc = 0xffff;
  for (const byte of data) {
    crc = (crc >> 8) ^ CRC_TABLE[(crc ^ byte) & 0xff];
  }
  return crc ^ 0xffff;
}

export function hexToBytes(hex: string): Uint8Array {
  if (hex.length % 2 !== 0) throw new Error("odd hex length");
  const out = new Uint8Array(hex.length / 2);
  for (let i = 0; i < out.length; i++) {
    out[i] = parseInt(hex.slice(2 * i, 2 * i + 2), 16);
  }
  return out;
}

export function decodeFrame(hex: string): Frame {
  const raw = hexToBytes(hex);
  if (raw.length < 12) throw new Error("truncated frame");
  if (raw[0] !== 0xa7) throw new Error("bad magic");
  const payloadLen = (raw[1] << 8) | raw[2];
  if (raw.length < 10 + payloadLen + 2) throw new Error("truncated frame");
  const body = raw.slice(0, 10 + payloadLen);
  const crc = (raw[10 + payloadLen] << 8) | raw[11 + payloadLen];
  if (crc !== crc16X25(body)) throw new Error("crc mismatch");
  const payloadBytes = raw.slice(10, 10 + payloadLen);
  const text = new TextDecoder().decode(payloadBytes);
  return {
    sysId: raw[3],
    compId: raw[4],
    targetSys: raw[5],
    targetComp: raw[6],
    seq: raw[7],
    msgType: raw[8],
    payload: payloadLen ? JSON.parse(text) : null,
  };
}

export interface TelemetryBody {
  lat: number;
  lon: number;
  battery: number;
  mode: string;
  tick: number;
  visited: number;
}

export function telemetryBody(frame: Frame): TelemetryBody {
  if (frame.msgType !== MSG_TELEMETRY) throw new Error("not a telemetry frame");
  return frame.payload as TelemetryBody;
}
