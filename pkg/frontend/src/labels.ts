/** Emotion label normalization onto the 7-value interchange label set. */

export const EMOTION_LABELS = [
  "joy",
  "anger",
  "sadness",
  "fear",
  "surprise",
  "disgust",
  "neutral",
] as const;

export type EmotionLabel = (typeof EMOTION_LABELS)[number];

// MELD annotation spellings (plus the happiness variant some releases
// and derived corpora use) mapped onto the canonical names.
const ALIASES: Record<string, EmotionLabel> = {
  joy: "joy",
  happiness: "joy",
  happy: "joy",
  anger: "anger",
  angry: "anger",
  sadness: "sadness",
  sad: "sadness",
  fear: "fear",
  surprise: "surprise",
  disgust: "disgust",
  neutral: "neutral",
};

export function normalizeEmotion(raw: string): EmotionLabel | null {
  return ALIASES[raw.trim().toLowerCase()] ?? null;
}
