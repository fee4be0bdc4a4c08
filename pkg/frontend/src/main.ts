/**
 * Single-page steering UI: upload source, inspect candidates with diff
 * previews, apply/undo steps, and trigger translation. One session per tab;
 * every action round-trips to the service (no optimistic updates).
 */

import { ApiError, SessionApi, SessionState } from "./api.js";
import {
  TARGETS,
  candidateRows,
  isFinalForm,
  parseUnifiedDiff,
  timeline,
} from "./model.js";

const api = new SessionApi("");

let sessionId: string | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function toast(message: string) {
  const box = el<HTMLDivElement>("toast");
  box.textContent = message;
  box.classList.add("visible");
  setTimeout(() => box.classList.remove("visible"), 4000);
}

function render(state: SessionState) {
  el<HTMLPreElement>("code").textContent = state.code;
  el<HTMLSpanElement>("session-label").textContent = `session ${state.session_id}`;

  const bannerBox = el<HTMLDivElement>("final-banner");
  const translateBtn = el<HTMLButtonElement>("translate");
  if (isFinalForm(state)) {
    bannerBox.classList.add("visible");
    translateBtn.disabled = false;
  } else {
    bannerBox.classList.remove("visible");
    translateBtn.disabled = false;
  }

  const list = el<HTMLUListElement>("candidates");
  list.textContent = "";
  for (const row of candidateRows(state)) {
    const item = document.createElement("li");
    item.className = `candidate ${row.verdict === "True" ? "sure" : "maybe"}`;

    const header = document.createElement("div");
    header.className = "candidate-header";
    const name = document.createElement("button");
    name.className = "apply-btn";
    name.textContent = `${row.rule} @ ${row.pos}`;
    name.addEventListener("click", () => applyCandidate(row.rule, row.pos, row.requiresConfirm));
    const badge = document.createElement("span");
    badge.className = "badge";
    badge.textContent = row.badge;
    header.append(name, badge);

    const diff = document.createElement("pre");
    diff.className = "diff";
    for (const line of parseUnifiedDiff(row.diff)) {
      const span = document.createElement("span");
      span.className = `diff-${line.kind}`;
      span.textContent = line.text + "\n";
      diff.append(span);
    }
    const details = document.createElement("details");
    const summary = document.createElement("summary");
    summary.textContent = "preview";
    details.append(summary, diff);

    item.append(header, details);
    list.append(item);
  }

  const history = el<HTMLOListElement>("history");
  history.textContent = "";
  for (const entry of timeline(state)) {
    const item = document.createElement("li");
    item.textContent = entry.label;
    history.append(item);
  }
  el<HTMLButtonElement>("undo").disabled = state.history.length === 0;
}

async function refresh() {
  if (!sessionId) return;
  render(await api.getState(sessionId));
}

async function applyCandidate(rule: string, pos: number, confirm_: boolean) {
  if (!sessionId) return;
  if (confirm_) {
    const ok = window.confirm(
      `${rule} is only probably applicable (its conditions could not be fully decided). Apply anyway?`,
    );
    if (!ok) return;
  }
  try {
    render(await api.apply(sessionId, rule, pos, confirm_));
  } catch (err) {
    if (err instanceof ApiError && err.isStaleCandidate) {
      toast(`stale candidate: ${err.message}`);
      await refresh();
    } else {
      toast(String(err));
    }
  }
}

async function start() {
  const source = el<HTMLTextAreaElement>("source").value;
  try {
    sessionId = await api.createSession(source);
    el<HTMLDivElement>("workbench").classList.add("active");
    await refresh();
  } catch (err) {
    toast(err instanceof ApiError ? `rejected: ${err.message}` : String(err));
  }
}

async function undo() {
  if (!sessionId) return;
  try {
    render(await api.undo(sessionId));
  } catch (err) {
    toast(String(err));
  }
}

async function translate() {
  if (!sessionId) return;
  const target = el<HTMLSelectElement>("target").value;
  try {
    const result = await api.translate(sessionId, target);
    el<HTMLPreElement>("output").textContent = result.output;
    el<HTMLDivElement>("output-panel").classList.add("visible");
  } catch (err) {
    toast(err instanceof ApiError ? `translate: ${err.message}` : String(err));
  }
}

async function exportLog() {
  if (!sessionId) return;
  const text = await api.exportLog(sessionId);
  const blob = new Blob([text], { type: "application/x-ndjson" });
  const link = document.createElement("a");
  link.href = URL.createObjectURL(blob);
  link.download = `derivation-${sessionId}.jsonl`;
  link.click();
}

function init() {
  el<HTMLButtonElement>("start").addEventListener("click", () => void start());
  el<HTMLButtonElement>("undo").addEventListener("click", () => void undo());
  el<HTMLButtonElement>("translate").addEventListener("click", () => void translate());
  el<HTMLButtonElement>("export").addEventListener("click", () => void exportLog());
  const select = el<HTMLSelectElement>("target");
  for (const target of TARGETS) {
    const option = document.createElement("option");
    option.value = target;
    option.textContent = target;
    select.append(option);
  }
}

init();
