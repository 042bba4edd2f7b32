/** CLI: node dist/cli.js --csv <annotations.csv> --media <dir> --out <file.jsonl>
 *        [--split train] [--grid 4] [--mels 12] [--d-text 8]
 *        [--max-video-frames 12] [--max-audio-frames 24] [--text-encoder hash]
 */

import { extractSplit } from "./extract.js";
import { DEFAULT_FEATURE_CONFIG, FatalExtractError, FeatureConfig } from "./types.js";

function parseArgs(argv: string[]): Map<string, string> {
  const args = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    const value = argv[i + 1];
    if (!key.startsWith("--") || value === undefined) {
      throw new FatalExtractError(`malformed arguments near ${key}`);
    }
    args.set(key.slice(2), value);
  }
  return args;
}

function main(): number {
  let args: Map<string, string>;
  try {
    args = parseArgs(process.argv.slice(2));
  } catch (e) {
    console.error((e as Error).message);
    return 2;
  }
  const csv = args.get("csv");
  const media = args.get("media");
  const out = args.get("out");
  if (!csv || !media || !out) {
    console.error("usage: --csv annotations.csv --media dir --out file.jsonl "
      + "[--split name] [--grid N] [--mels N] [--d-text N]");
    return 2;
  }
  const cfg: FeatureConfig = {
    ...DEFAULT_FEATURE_CONFIG,
    gridSize: Number(args.get("grid") ?? DEFAULT_FEATURE_CONFIG.gridSize),
    nMels: Number(args.get("mels") ?? DEFAULT_FEATURE_CONFIG.nMels),
    dText: Number(args.get("d-text") ?? DEFAULT_FEATURE_CONFIG.dText),
    maxVideoFrames: Number(
      args.get("max-video-frames") ?? DEFAULT_FEATURE_CONFIG.maxVideoFrames),
    maxAudioFrames: Number(
      args.get("max-audio-frames") ?? DEFAULT_FEATURE_CONFIG.maxAudioFrames),
    textEncoder: args.get("text-encoder") ?? DEFAULT_FEATURE_CONFIG.textEncoder,
  };
  try {
    const result = extractSplit(csv, media, out, cfg, args.get("split") ?? "train");
    console.log(JSON.stringify({
      out: result.outputPath,
      written: result.written,
      skipped: result.skipped.length,
      skip_report: result.skipReportPath,
      features_lock: result.featuresLockPath,
    }));
    return 0;
  } catch (e) {
    console.error((e as Error).message);
    return 1;
  }
}

process.exit(main());
