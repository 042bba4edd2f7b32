/** Shared types for the MELD extraction pipeline. */

export interface MeldUtteranceRecord {
  srNo: number;
  utterance: string;
  speaker: string;
  emotion: string; // raw annotation string
  dialogueId: number;
  utteranceId: number;
}

export interface FeatureConfig {
  /** Image features are a gridSize x gridSize intensity grid -> d_img = gridSize^2. */
  gridSize: number;
  /** Center-crop fraction kept as the facial-region heuristic. */
  cropFraction: number;
  /** Keep every videoFrameStride-th frame, capped at maxVideoFrames. */
  videoFrameStride: number;
  maxVideoFrames: number;
  /** Log-mel settings: filter count is d_audio. */
  nMels: number;
  frameWindowMs: number;
  frameHopMs: number;
  maxAudioFrames: number;
  /** Per-token text embedding dimension (d_text). */
  dText: number;
  /** Text encoder id; "hash" is the offline deterministic default. */
  textEncoder: string;
}

export const DEFAULT_FEATURE_CONFIG: FeatureConfig = {
  gridSize: 4,
  cropFraction: 0.6,
  videoFrameStride: 1,
  maxVideoFrames: 12,
  nMels: 12,
  frameWindowMs: 25,
  frameHopMs: 10,
  maxAudioFrames: 24,
  dText: 8,
  textEncoder: "hash",
};

export interface SkipEntry {
  id: string;
  reason: string;
}

export interface ExtractResult {
  written: number;
  skipped: SkipEntry[];
  outputPath: string;
  skipReportPath: string;
  featuresLockPath: string;
}

export class FatalExtractError extends Error {}

/** Per-clip problem: the record is skipped and logged, not fatal. */
export class ClipSkipError extends Error {}
