/** The extraction pipeline: annotation CSV + media clips -> one
 * schema-conformant JSONL file, a skip report, and a features.lock
 * provenance record. */

import fs from "fs";

import { parseAnnotationCsv } from "./csv.js";
import { evenSubsample, logMelFrames } from "./dsp.js";
import { frameFeatures } from "./image.js";
import { normalizeEmotion } from "./labels.js";
import { clipKey, locateClip } from "./media.js";
import { makeTextEncoder, tokenize } from "./textenc.js";
import {
  ClipSkipError,
  ExtractResult,
  FeatureConfig,
  MeldUtteranceRecord,
  SkipEntry,
} from "./types.js";
import { decodeWav } from "./wav.js";

const FORMAT_NAME = "trifuse-mmds";
const FORMAT_VERSION = 1;

interface SampleLine {
  id: string;
  dialogue_id: string;
  label: string;
  img: number[][];
  audio: number[][];
  text_emb: number[][];
}

function extractOne(
  record: MeldUtteranceRecord,
  mediaDir: string,
  cfg: FeatureConfig,
  encode: (tokens: string[]) => number[][],
): SampleLine {
  const label = normalizeEmotion(record.emotion);
  if (label === null) {
    throw new ClipSkipError(`unmappable emotion label ${JSON.stringify(record.emotion)}`);
  }
  const tokens = tokenize(record.utterance);
  if (tokens.length === 0) {
    throw new ClipSkipError("empty transcript after tokenization");
  }
  const media = locateClip(mediaDir, record.dialogueId, record.utteranceId);
  const strided = media.framePaths.filter(
    (_, i) => i % cfg.videoFrameStride === 0);
  const picked = evenSubsample(strided.length, cfg.maxVideoFrames)
    .map((i) => strided[i]);
  const img = picked.map((p) => frameFeatures(fs.readFileSync(p), cfg));
  const wav = decodeWav(fs.readFileSync(media.wavPath));
  const audio = logMelFrames(wav.samples, wav.sampleRate, cfg);
  const textEmb = encode(tokens);
  return {
    id: clipKey(record.dialogueId, record.utteranceId),
    dialogue_id: `dia${record.dialogueId}`,
    label,
    img,
    audio,
    text_emb: textEmb,
  };
}

export function extractSplit(
  csvPath: string,
  mediaDir: string,
  outputPath: string,
  cfg: FeatureConfig,
  splitName = "train",
): ExtractResult {
  const records = parseAnnotationCsv(csvPath);
  const encoder = makeTextEncoder(cfg.textEncoder, cfg.dText);
  const lines: SampleLine[] = [];
  const skipped: SkipEntry[] = [];
  for (const record of records) {
    const id = clipKey(record.dialogueId, record.utteranceId);
    try {
      lines.push(extractOne(record, mediaDir, cfg, (t) => encoder.encode(t)));
    } catch (e) {
      if (e instanceof ClipSkipError) {
        console.warn(`skip ${id}: ${e.message}`);
        skipped.push({ id, reason: e.message });
      } else {
        throw e;
      }
    }
  }
  const header = {
    format: FORMAT_NAME,
    version: FORMAT_VERSION,
    d_img: cfg.gridSize * cfg.gridSize,
    d_audio: cfg.nMels,
    text_mode: "embeddings",
    d_text: cfg.dText,
    splits: { [splitName]: lines.map((l) => l.id) },
  };
  const body = [JSON.stringify(header), ...lines.map((l) => JSON.stringify(l))];
  fs.writeFileSync(outputPath, body.join("\n") + "\n");

  const skipReportPath = `${outputPath}.skips.json`;
  fs.writeFileSync(skipReportPath, JSON.stringify({
    csv: csvPath,
    total: records.length,
    written: lines.length,
    skipped,
  }, null, 2) + "\n");

  const featuresLockPath = `${outputPath}.features.lock`;
  fs.writeFileSync(featuresLockPath, JSON.stringify({
    format: FORMAT_NAME,
    version: FORMAT_VERSION,
    feature_config: cfg,
    text_encoder: encoder.name,
    image_features: "grayscale center-crop box-averaged intensity grid, standardized per frame",
    audio_features: "log-mel filterbank energies over Hamming-windowed FFT frames",
  }, null, 2) + "\n");

  return {
    written: lines.length,
    skipped,
    outputPath,
    skipReportPath,
    featuresLockPath,
  };
}
