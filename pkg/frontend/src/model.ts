/**
 * Pure view-model builders. Everything here derives from the last server
 * response; there is no client-side transformation logic to get wrong.
 */

import type { CandidateInfo, SessionState } from "./api.js";

export interface CandidateRow {
  rule: string;
  pos: number;
  verdict: "True" | "Unknown";
  badge: string;
  clickable: boolean;
  requiresConfirm: boolean;
  diff: string;
  key: string;
}

export function candidateRows(state: SessionState): CandidateRow[] {
  return state.candidates.map((c: CandidateInfo) => ({
    rule: c.rule,
    pos: c.pos,
    verdict: c.verdict,
    badge: c.verdict === "True" ? "applicable" : "probably applicable",
    clickable: true,
    requiresConfirm: c.verdict !== "True",
    diff: c.preview_diff,
    key: `${c.rule}@${c.pos}`,
  }));
}

export function isFinalForm(state: SessionState): boolean {
  return state.candidates.length === 0;
}

export interface TimelineEntry {
  step: number;
  label: string;
}

export function timeline(state: SessionState): TimelineEntry[] {
  return state.history.map((h) => ({
    step: h.step,
    label: `${h.step}. ${h.rule} @ ${h.pos}`,
  }));
}

/** Candidate triples in the exact shape the CLI's `candidates` command
 * prints, for parity checks and display. */
export function candidateTriples(
  state: SessionState,
): { rule: string; pos: number; verdict: string }[] {
  return state.candidates.map((c) => ({ rule: c.rule, pos: c.pos, verdict: c.verdict }));
}

export type DiffLineKind = "meta" | "hunk" | "add" | "del" | "ctx";

export interface DiffLine {
  kind: DiffLineKind;
  text: string;
}

export function parseUnifiedDiff(diff: string): DiffLine[] {
  const out: DiffLine[] = [];
  for (const line of diff.split("\n")) {
    if (line === "" && out.length && out[out.length - 1].text === "") continue;
    if (line.startsWith("---") || line.startsWith("+++")) {
      out.push({ kind: "meta", text: line });
    } else if (line.startsWith("@@")) {
      out.push({ kind: "hunk", text: line });
    } else if (line.startsWith("+")) {
      out.push({ kind: "add", text: line });
    } else if (line.startsWith("-")) {
      out.push({ kind: "del", text: line });
    } else if (line !== "") {
      out.push({ kind: "ctx", text: line });
    }
  }
  return out;
}

export const TARGETS = ["openmp", "mpi"] as const;
