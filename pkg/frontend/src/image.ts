/** Per-frame facial-region feature vectors from PNG frames: grayscale,
 * center crop (the facial-region heuristic), box-averaged intensity
 * grid, per-frame standardization. */

import { PNG } from "pngjs";

import { ClipSkipError, FeatureConfig } from "./types.js";

export interface GrayImage {
  width: number;
  height: number;
  pixels: Float64Array; // row-major, 0..1
}

export function decodePngToGray(buffer: Buffer): GrayImage {
  let png: PNG;
  try {
    png = PNG.sync.read(buffer);
  } catch (e) {
    throw new ClipSkipError(`undecodable PNG frame: ${(e as Error).message}`);
  }
  const pixels = new Float64Array(png.width * png.height);
  for (let i = 0; i < pixels.length; i++) {
    const r = png.data[i * 4];
    const g = png.data[i * 4 + 1];
    const b = png.data[i * 4 + 2];
    pixels[i] = (0.299 * r + 0.587 * g + 0.114 * b) / 255;
  }
  return { width: png.width, height: png.height, pixels };
}

export function centerCrop(img: GrayImage, fraction: number): GrayImage {
  const w = Math.max(1, Math.round(img.width * fraction));
  const h = Math.max(1, Math.round(img.height * fraction));
  const x0 = Math.floor((img.width - w) / 2);
  const y0 = Math.floor((img.height - h) / 2);
  const pixels = new Float64Array(w * h);
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      pixels[y * w + x] = img.pixels[(y0 + y) * img.width + (x0 + x)];
    }
  }
  return { width: w, height: h, pixels };
}

/** Box-average the image onto a g x g grid and standardize the result. */
export function gridFeatures(img: GrayImage, gridSize: number): number[] {
  const g = gridSize;
  const sums = new Float64Array(g * g);
  const counts = new Float64Array(g * g);
  for (let y = 0; y < img.height; y++) {
    const gy = Math.min(g - 1, Math.floor((y * g) / img.height));
    for (let x = 0; x < img.width; x++) {
      const gx = Math.min(g - 1, Math.floor((x * g) / img.width));
      sums[gy * g + gx] += img.pixels[y * img.width + x];
      counts[gy * g + gx] += 1;
    }
  }
  const cells = Array.from(sums, (s, i) => (counts[i] > 0 ? s / counts[i] : 0));
  const mean = cells.reduce((a, b) => a + b, 0) / cells.length;
  const variance =
    cells.reduce((a, b) => a + (b - mean) * (b - mean), 0) / cells.length;
  const std = Math.sqrt(variance + 1e-8);
  return cells.map((c) => (c - mean) / std);
}

export function frameFeatures(buffer: Buffer, cfg: FeatureConfig): number[] {
  const gray = decodePngToGray(buffer);
  return gridFeatures(centerCrop(gray, cfg.cropFraction), cfg.gridSize);
}
