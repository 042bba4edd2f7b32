/** Log-mel feature extraction: framing, Hamming window, radix-2 FFT,
 * triangular mel filterbank. */

import { ClipSkipError, FeatureConfig } from "./types.js";

/** In-place iterative radix-2 FFT; lengths must be powers of two. */
export function fft(re: Float64Array, im: Float64Array): void {
  const n = re.length;
  if ((n & (n - 1)) !== 0) {
    throw new Error(`FFT length ${n} is not a power of two`);
  }
  for (let i = 1, j = 0; i < n; i++) {
    let bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      [re[i], re[j]] = [re[j], re[i]];
      [im[i], im[j]] = [im[j], im[i]];
    }
  }
  for (let len = 2; len <= n; len <<= 1) {
    const angle = (-2 * Math.PI) / len;
    const wRe = Math.cos(angle);
    const wIm = Math.sin(angle);
    for (let i = 0; i < n; i += len) {
      let curRe = 1;
      let curIm = 0;
      for (let j = 0; j < len / 2; j++) {
        const aRe = re[i + j];
        const aIm = im[i + j];
        const bRe = re[i + j + len / 2] * curRe - im[i + j + len / 2] * curIm;
        const bIm = re[i + j + len / 2] * curIm + im[i + j + len / 2] * curRe;
        re[i + j] = aRe + bRe;
        im[i + j] = aIm + bIm;
        re[i + j + len / 2] = aRe - bRe;
        im[i + j + len / 2] = aIm - bIm;
        const nextRe = curRe * wRe - curIm * wIm;
        curIm = curRe * wIm + curIm * wRe;
        curRe = nextRe;
      }
    }
  }
}

export function hammingWindow(n: number): Float64Array {
  const w = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    w[i] = 0.54 - 0.46 * Math.cos((2 * Math.PI * i) / (n - 1));
  }
  return w;
}

function nextPow2(n: number): number {
  let p = 1;
  while (p < n) p <<= 1;
  return p;
}

function hzToMel(hz: number): number {
  return 2595 * Math.log10(1 + hz / 700);
}

function melToHz(mel: number): number {
  return 700 * (10 ** (mel / 2595) - 1);
}

/** Triangular filters [nMels][nfft/2 + 1] over 0..sampleRate/2. */
export function melFilterbank(nMels: number, nfft: number, sampleRate: number): Float64Array[] {
  const nBins = nfft / 2 + 1;
  const melMax = hzToMel(sampleRate / 2);
  const melPoints = new Float64Array(nMels + 2);
  for (let i = 0; i < nMels + 2; i++) {
    melPoints[i] = melToHz((melMax * i) / (nMels + 1));
  }
  const bins = Array.from(melPoints, (hz) =>
    Math.floor(((nfft + 1) * hz) / sampleRate));
  const filters: Float64Array[] = [];
  for (let m = 1; m <= nMels; m++) {
    const filter = new Float64Array(nBins);
    const [lo, mid, hi] = [bins[m - 1], bins[m], bins[m + 1]];
    for (let k = lo; k < mid; k++) {
      if (k >= 0 && k < nBins && mid > lo) filter[k] = (k - lo) / (mid - lo);
    }
    for (let k = mid; k <= hi; k++) {
      if (k >= 0 && k < nBins && hi > mid) filter[k] = (hi - k) / (hi - mid);
    }
    filters.push(filter);
  }
  return filters;
}

/** Evenly spaced index subsample, first index always kept. */
export function evenSubsample(count: number, cap: number): number[] {
  if (count <= cap) {
    return Array.from({ length: count }, (_, i) => i);
  }
  const picked: number[] = [];
  for (let i = 0; i < cap; i++) {
    picked.push(Math.floor((i * count) / cap));
  }
  return picked;
}

/** Per-frame log-mel vectors [nFrames][nMels]. */
export function logMelFrames(
  samples: Float64Array,
  sampleRate: number,
  cfg: FeatureConfig,
): number[][] {
  const windowLen = Math.max(8, Math.round((cfg.frameWindowMs / 1000) * sampleRate));
  const hop = Math.max(1, Math.round((cfg.frameHopMs / 1000) * sampleRate));
  if (samples.length < windowLen) {
    throw new ClipSkipError(
      `audio too short: ${samples.length} samples < one ${windowLen}-sample window`);
  }
  const nfft = nextPow2(windowLen);
  const window = hammingWindow(windowLen);
  const filters = melFilterbank(cfg.nMels, nfft, sampleRate);
  const nFrames = 1 + Math.floor((samples.length - windowLen) / hop);
  const starts = evenSubsample(nFrames, cfg.maxAudioFrames).map((i) => i * hop);
  const frames: number[][] = [];
  for (const start of starts) {
    const re = new Float64Array(nfft);
    const im = new Float64Array(nfft);
    for (let i = 0; i < windowLen; i++) {
      re[i] = samples[start + i] * window[i];
    }
    fft(re, im);
    const nBins = nfft / 2 + 1;
    const power = new Float64Array(nBins);
    for (let k = 0; k < nBins; k++) {
      power[k] = (re[k] * re[k] + im[k] * im[k]) / nfft;
    }
    const mel = new Array<number>(cfg.nMels);
    for (let m = 0; m < cfg.nMels; m++) {
      let acc = 0;
      for (let k = 0; k < nBins; k++) acc += filters[m][k] * power[k];
      mel[m] = Math.log(acc + 1e-10);
    }
    frames.push(mel);
  }
  return frames;
}
