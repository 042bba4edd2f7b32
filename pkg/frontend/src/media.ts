/** Clip discovery and demuxing.
 *
 * Two layouts are accepted per utterance, keyed as diaD_uttU:
 *   1. a directory diaD_uttU/ holding pre-extracted PNG frames plus an
 *      audio.wav track (covers releases demuxed ahead of time);
 *   2. the raw diaD_uttU.mp4 clip, demuxed on the fly when an ffmpeg
 *      binary is available; without ffmpeg the clip is skipped with a
 *      logged reason.
 */

import { spawnSync } from "child_process";
import fs from "fs";
import os from "os";
import path from "path";

import { ClipSkipError } from "./types.js";

export interface ClipMedia {
  framePaths: string[]; // sorted PNG frames
  wavPath: string;
}

export function clipKey(dialogueId: number, utteranceId: number): string {
  return `dia${dialogueId}_utt${utteranceId}`;
}

function ffmpegAvailable(): boolean {
  const probe = spawnSync("ffmpeg", ["-version"], { stdio: "ignore" });
  return probe.status === 0;
}

function demuxMp4(mp4Path: string, frameRate: number): ClipMedia {
  if (!ffmpegAvailable()) {
    throw new ClipSkipError("mp4 clip present but ffmpeg is not available");
  }
  const workDir = fs.mkdtempSync(path.join(os.tmpdir(), "meld-demux-"));
  const frames = spawnSync("ffmpeg", [
    "-i", mp4Path, "-vf", `fps=${frameRate}`,
    path.join(workDir, "frame_%04d.png"),
  ], { stdio: "ignore" });
  const audio = spawnSync("ffmpeg", [
    "-i", mp4Path, "-ac", "1", "-ar", "16000",
    path.join(workDir, "audio.wav"),
  ], { stdio: "ignore" });
  if (frames.status !== 0 || audio.status !== 0) {
    throw new ClipSkipError("ffmpeg failed to demux the clip");
  }
  return readClipDirectory(workDir);
}

export function readClipDirectory(dir: string): ClipMedia {
  const entries = fs.readdirSync(dir).sort();
  const framePaths = entries
    .filter((f) => f.toLowerCase().endsWith(".png"))
    .map((f) => path.join(dir, f));
  const wavName = entries.find((f) => f.toLowerCase().endsWith(".wav"));
  if (framePaths.length === 0) {
    throw new ClipSkipError("clip directory has no PNG frames");
  }
  if (!wavName) {
    throw new ClipSkipError("clip directory has no WAV audio track");
  }
  return { framePaths, wavPath: path.join(dir, wavName) };
}

export function locateClip(
  mediaDir: string,
  dialogueId: number,
  utteranceId: number,
  demuxFrameRate = 3,
): ClipMedia {
  const key = clipKey(dialogueId, utteranceId);
  const asDir = path.join(mediaDir, key);
  if (fs.existsSync(asDir) && fs.statSync(asDir).isDirectory()) {
    return readClipDirectory(asDir);
  }
  const asMp4 = path.join(mediaDir, `${key}.mp4`);
  if (fs.existsSync(asMp4)) {
    return demuxMp4(asMp4, demuxFrameRate);
  }
  throw new ClipSkipError(`media clip missing (${key}/ or ${key}.mp4)`);
}
