/** Synthetic mini-MELD corpus builders for the pipeline tests. */

import fs from "fs";
import path from "path";

import { PNG } from "pngjs";

import { encodeWavPcm16 } from "../src/wav";

export interface FixtureRow {
  utterance: string;
  speaker: string;
  emotion: string;
  dialogueId: number;
  utteranceId: number;
  media: "ok" | "missing" | "corrupt-wav" | "no-frames";
}

export const DEFAULT_ROWS: FixtureRow[] = [
  { utterance: "Oh my god, this is great!", speaker: "Joey", emotion: "joy", dialogueId: 0, utteranceId: 0, media: "ok" },
  { utterance: "I cannot believe you did that.", speaker: "Ross", emotion: "anger", dialogueId: 0, utteranceId: 1, media: "ok" },
  { utterance: "I miss her so much.", speaker: "Rachel", emotion: "sadness", dialogueId: 0, utteranceId: 2, media: "ok" },
  { utterance: "What was that noise?", speaker: "Chandler", emotion: "fear", dialogueId: 1, utteranceId: 0, media: "ok" },
  { utterance: "No way, really?", speaker: "Monica", emotion: "surprise", dialogueId: 1, utteranceId: 1, media: "ok" },
  { utterance: "That smells awful.", speaker: "Phoebe", emotion: "disgust", dialogueId: 1, utteranceId: 2, media: "ok" },
  { utterance: "It is Tuesday, I think.", speaker: "Ross", emotion: "neutral", dialogueId: 2, utteranceId: 0, media: "ok" },
  { utterance: "Best day ever, honestly!", speaker: "Joey", emotion: "happiness", dialogueId: 2, utteranceId: 1, media: "ok" },
  { utterance: "This clip is gone.", speaker: "Ross", emotion: "neutral", dialogueId: 3, utteranceId: 0, media: "missing" },
  { utterance: "This audio is broken.", speaker: "Monica", emotion: "joy", dialogueId: 3, utteranceId: 1, media: "corrupt-wav" },
];

function csvEscape(value: string): string {
  return `"${value.replace(/"/g, '""')}"`;
}

export function writeAnnotationCsv(dir: string, rows: FixtureRow[]): string {
  const header = "Sr No.,Utterance,Speaker,Emotion,Sentiment,Dialogue_ID,Utterance_ID";
  const lines = rows.map((r, i) => [
    String(i + 1), csvEscape(r.utterance), r.speaker, r.emotion, "neutral",
    String(r.dialogueId), String(r.utteranceId),
  ].join(","));
  const csvPath = path.join(dir, "annotations.csv");
  fs.writeFileSync(csvPath, [header, ...lines].join("\n") + "\n");
  return csvPath;
}

/** Deterministic little gradient-ish PNG so features differ per seed. */
export function makePng(width: number, height: number, seed: number): Buffer {
  const png = new PNG({ width, height });
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const i = (y * width + x) * 4;
      png.data[i] = (x * 31 + seed * 53) % 256;
      png.data[i + 1] = (y * 17 + seed * 29) % 256;
      png.data[i + 2] = (x + y + seed) % 256;
      png.data[i + 3] = 255;
    }
  }
  return PNG.sync.write(png);
}

export function makeWavBuffer(seed: number, seconds = 0.5, rate = 8000): Buffer {
  const n = Math.round(seconds * rate);
  const samples = new Array<number>(n);
  const f = 180 + 60 * seed;
  for (let i = 0; i < n; i++) {
    samples[i] = 0.4 * Math.sin((2 * Math.PI * f * i) / rate)
      + 0.1 * Math.sin((2 * Math.PI * 2.3 * f * i) / rate + seed);
  }
  return encodeWavPcm16(samples, rate);
}

export function writeMediaTree(dir: string, rows: FixtureRow[]): string {
  const mediaDir = path.join(dir, "media");
  fs.mkdirSync(mediaDir, { recursive: true });
  for (const row of rows) {
    if (row.media === "missing") continue;
    const clipDir = path.join(mediaDir, `dia${row.dialogueId}_utt${row.utteranceId}`);
    fs.mkdirSync(clipDir, { recursive: true });
    const seed = row.dialogueId * 10 + row.utteranceId;
    if (row.media !== "no-frames") {
      for (let f = 0; f < 5; f++) {
        fs.writeFileSync(path.join(clipDir, `frame_${String(f).padStart(4, "0")}.png`),
          makePng(32, 24, seed + f));
      }
    }
    if (row.media === "corrupt-wav") {
      fs.writeFileSync(path.join(clipDir, "audio.wav"), Buffer.from("not a wav"));
    } else {
      fs.writeFileSync(path.join(clipDir, "audio.wav"), makeWavBuffer(seed));
    }
  }
  return mediaDir;
}

export function buildCorpus(dir: string, rows: FixtureRow[] = DEFAULT_ROWS) {
  fs.mkdirSync(dir, { recursive: true });
  return {
    csvPath: writeAnnotationCsv(dir, rows),
    mediaDir: writeMediaTree(dir, rows),
    rows,
  };
}
