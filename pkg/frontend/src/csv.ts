/** MELD annotation CSV parsing. */

import fs from "fs";

import Papa from "papaparse";

import { FatalExtractError, MeldUtteranceRecord } from "./types.js";

const REQUIRED = ["Utterance", "Speaker", "Emotion", "Dialogue_ID", "Utterance_ID"];

export function parseAnnotationCsv(path: string): MeldUtteranceRecord[] {
  if (!fs.existsSync(path)) {
    throw new FatalExtractError(`annotation CSV not found: ${path}`);
  }
  const text = fs.readFileSync(path, "utf-8");
  const parsed = Papa.parse<Record<string, string>>(text, {
    header: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    const first = parsed.errors[0];
    throw new FatalExtractError(
      `annotation CSV ${path}: ${first.message} (row ${first.row})`,
    );
  }
  const fields = parsed.meta.fields ?? [];
  for (const column of REQUIRED) {
    if (!fields.includes(column)) {
      throw new FatalExtractError(
        `annotation CSV ${path}: missing required column ${column}`,
      );
    }
  }
  const records = parsed.data.map((row, i): MeldUtteranceRecord => ({
    srNo: Number(row["Sr No."] ?? i + 1),
    utterance: row["Utterance"] ?? "",
    speaker: row["Speaker"] ?? "",
    emotion: row["Emotion"] ?? "",
    dialogueId: Number(row["Dialogue_ID"]),
    utteranceId: Number(row["Utterance_ID"]),
  }));
  for (const r of records) {
    if (!Number.isFinite(r.dialogueId) || !Number.isFinite(r.utteranceId)) {
      throw new FatalExtractError(
        `annotation CSV ${path}: non-numeric Dialogue_ID/Utterance_ID ` +
        `near Sr No. ${r.srNo}`,
      );
    }
  }
  // Deterministic append order regardless of CSV row order.
  records.sort((a, b) => a.dialogueId - b.dialogueId || a.utteranceId - b.utteranceId);
  return records;
}
