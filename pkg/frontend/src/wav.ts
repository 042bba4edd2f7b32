/** Minimal RIFF/WAVE decoder: PCM16 and IEEE float32, any channel
 * count (channels are mean-mixed to mono). */

import { ClipSkipError } from "./types.js";

export interface DecodedAudio {
  sampleRate: number;
  samples: Float64Array; // mono
}

export function decodeWav(buffer: Buffer): DecodedAudio {
  if (buffer.length < 44 || buffer.toString("ascii", 0, 4) !== "RIFF" ||
      buffer.toString("ascii", 8, 12) !== "WAVE") {
    throw new ClipSkipError("not a RIFF/WAVE file");
  }
  let offset = 12;
  let format = 0;
  let channels = 0;
  let sampleRate = 0;
  let bitsPerSample = 0;
  let data: Buffer | null = null;
  while (offset + 8 <= buffer.length) {
    const chunkId = buffer.toString("ascii", offset, offset + 4);
    const chunkSize = buffer.readUInt32LE(offset + 4);
    const body = offset + 8;
    if (chunkId === "fmt ") {
      format = buffer.readUInt16LE(body);
      channels = buffer.readUInt16LE(body + 2);
      sampleRate = buffer.readUInt32LE(body + 4);
      bitsPerSample = buffer.readUInt16LE(body + 14);
    } else if (chunkId === "data") {
      data = buffer.subarray(body, body + chunkSize);
    }
    offset = body + chunkSize + (chunkSize % 2);
  }
  if (data === null || channels < 1 || sampleRate < 1) {
    throw new ClipSkipError("WAVE file has no usable fmt/data chunks");
  }
  let frames: number;
  let read: (frame: number, channel: number) => number;
  if (format === 1 && bitsPerSample === 16) {
    frames = Math.floor(data.length / (2 * channels));
    const pcm = data;
    read = (f, c) => pcm.readInt16LE((f * channels + c) * 2) / 32768;
  } else if (format === 3 && bitsPerSample === 32) {
    frames = Math.floor(data.length / (4 * channels));
    const pcm = data;
    read = (f, c) => pcm.readFloatLE((f * channels + c) * 4);
  } else {
    throw new ClipSkipError(
      `unsupported WAVE encoding (format ${format}, ${bitsPerSample} bits)`);
  }
  if (frames === 0) {
    throw new ClipSkipError("WAVE data chunk is empty");
  }
  const samples = new Float64Array(frames);
  for (let f = 0; f < frames; f++) {
    let acc = 0;
    for (let c = 0; c < channels; c++) acc += read(f, c);
    samples[f] = acc / channels;
    if (!Number.isFinite(samples[f])) {
      throw new ClipSkipError("non-finite audio sample");
    }
  }
  return { sampleRate, samples };
}

/** PCM16 mono encoder, used by fixtures and round-trip tests. */
export function encodeWavPcm16(samples: number[], sampleRate: number): Buffer {
  const data = Buffer.alloc(samples.length * 2);
  for (let i = 0; i < samples.length; i++) {
    const clamped = Math.max(-1, Math.min(1, samples[i]));
    data.writeInt16LE(Math.round(clamped * 32767), i * 2);
  }
  const header = Buffer.alloc(44);
  header.write("RIFF", 0, "ascii");
  header.writeUInt32LE(36 + data.length, 4);
  header.write("WAVE", 8, "ascii");
  header.write("fmt ", 12, "ascii");
  header.writeUInt32LE(16, 16);
  header.writeUInt16LE(1, 20); // PCM
  header.writeUInt16LE(1, 22); // mono
  header.writeUInt32LE(sampleRate, 24);
  header.writeUInt32LE(sampleRate * 2, 28);
  header.writeUInt16LE(2, 32);
  header.writeUInt16LE(16, 34);
  header.write("data", 36, "ascii");
  header.writeUInt32LE(data.length, 40);
  return Buffer.concat([header, data]);
}
