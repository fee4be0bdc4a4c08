/**
 * UI parity against the CLI: the candidate list the browser renders equals
 * the `candidates` CLI output, and applying a rule through the HTTP path
 * yields server state byte-identical to the CLI path. Spawns the real
 * service and consumes only its public HTTP interface, exactly as the
 * browser bundle does.
 */

import assert from "node:assert/strict";
import { execFileSync, spawn } from "node:child_process";
import { once } from "node:events";
import { readFileSync } from "node:fs";
import path from "node:path";
import { fileURLToPath } from "node:url";
import { after, before, test } from "node:test";

import { SessionApi } from "../src/api.js";
import { candidateTriples } from "../src/model.js";

const HERE = path.dirname(fileURLToPath(import.meta.url));
const REPO = path.resolve(HERE, "..", "..", "..");
const EXAMPLE = path.join(REPO, "samples", "two_loop_scale.c");
const PYTHON = process.env.STMLFORGE_PYTHON ?? "python3";

let child: ReturnType<typeof spawn>;
let base = "";

before(async () => {
  child = spawn(PYTHON, ["-m", "stmlforge.cli", "serve", "--port", "0"], {
    cwd: REPO,
    stdio: ["ignore", "pipe", "inherit"],
  });
  const stdout = child.stdout!;
  stdout.setEncoding("utf8");
  let buffer = "";
  while (!buffer.includes("serving on")) {
    const [chunk] = (await once(stdout, "data")) as [string];
    buffer += chunk;
  }
  const match = buffer.match(/serving on (http:\/\/[0-9.:]+)/);
  assert.ok(match, `no address line in: ${buffer}`);
  base = match[1];
});

after(() => {
  child.kill();
});

function cli(...args: string[]): string {
  return execFileSync(PYTHON, ["-m", "stmlforge.cli", ...args], {
    cwd: REPO,
    encoding: "utf8",
  });
}

test("browser candidate list equals the candidates CLI output", async () => {
  const api = new SessionApi(base);
  const sessionId = await api.createSession(readFileSync(EXAMPLE, "utf8"));
  const state = await api.getState(sessionId);

  const rendered = candidateTriples(state);
  const cliCandidates = JSON.parse(cli("candidates", EXAMPLE)) as typeof rendered;
  assert.equal(JSON.stringify(rendered), JSON.stringify(cliCandidates));
});

test("applying ForLoopFusion via the UI path matches the CLI path byte-for-byte", async () => {
  const api = new SessionApi(base);
  const sessionId = await api.createSession(readFileSync(EXAMPLE, "utf8"));
  const state = await api.getState(sessionId);
  const fusion = state.candidates.find((c) => c.rule === "ForLoopFusion");
  assert.ok(fusion, "ForLoopFusion must be applicable on the two-loop example");

  const afterApply = await api.apply(sessionId, fusion.rule, fusion.pos);
  const cliCode = cli(
    "apply", EXAMPLE, "--rule", "ForLoopFusion", "--pos", String(fusion.pos),
  );
  assert.equal(afterApply.code, cliCode);

  // undo restores the exact pre-apply state
  const undone = await api.undo(sessionId);
  assert.equal(undone.code, state.code);
});

test("stale candidates surface as 409 for the refresh toast", async () => {
  const api = new SessionApi(base);
  const sessionId = await api.createSession(readFileSync(EXAMPLE, "utf8"));
  await assert.rejects(
    api.apply(sessionId, "UndoDistribute", 0),
    (err: Error & { status?: number }) => {
      assert.equal((err as { status?: number }).status, 409);
      return true;
    },
  );
});
