import assert from "node:assert/strict";
import { test } from "node:test";

import type { SessionState } from "../src/api.js";
import {
  candidateRows,
  candidateTriples,
  isFinalForm,
  parseUnifiedDiff,
  timeline,
} from "../src/model.js";

function state(overrides: Partial<SessionState> = {}): SessionState {
  return {
    session_id: "abc123",
    code: "int a;\na = 1;\n",
    target: null,
    pragmas: [],
    candidates: [],
    history: [],
    ...overrides,
  };
}

test("true-verdict candidates are directly clickable", () => {
  const rows = candidateRows(
    state({
      candidates: [
        { rule: "ForLoopFusion", pos: 5, verdict: "True", preview_diff: "" },
      ],
    }),
  );
  assert.equal(rows.length, 1);
  assert.equal(rows[0].badge, "applicable");
  assert.equal(rows[0].requiresConfirm, false);
  assert.equal(rows[0].key, "ForLoopFusion@5");
});

test("unknown-verdict candidates need explicit confirmation", () => {
  const rows = candidateRows(
    state({
      candidates: [
        { rule: "JoinAssignments", pos: 9, verdict: "Unknown", preview_diff: "" },
      ],
    }),
  );
  assert.equal(rows[0].badge, "probably applicable");
  assert.equal(rows[0].requiresConfirm, true);
});

test("zero candidates means final form", () => {
  assert.equal(isFinalForm(state()), true);
  assert.equal(
    isFinalForm(
      state({
        candidates: [
          { rule: "ForLoopFusion", pos: 5, verdict: "True", preview_diff: "" },
        ],
      }),
    ),
    false,
  );
});

test("timeline labels number the applied steps", () => {
  const entries = timeline(
    state({
      history: [
        { step: 1, rule: "ForLoopFusion", pos: 5 },
        { step: 2, rule: "AugAdditionAssign", pos: 17 },
      ],
    }),
  );
  assert.deepEqual(
    entries.map((e) => e.label),
    ["1. ForLoopFusion @ 5", "2. AugAdditionAssign @ 17"],
  );
});

test("candidate triples carry exactly rule/pos/verdict", () => {
  const triples = candidateTriples(
    state({
      candidates: [
        { rule: "ForLoopFusion", pos: 5, verdict: "True", preview_diff: "x" },
      ],
    }),
  );
  assert.deepEqual(triples, [{ rule: "ForLoopFusion", pos: 5, verdict: "True" }]);
});

test("unified diffs classify added, removed, and meta lines", () => {
  const diff = "--- current\n+++ Rule@5\n@@ -1,2 +1,1 @@\n-old line\n+new line\n context\n";
  const lines = parseUnifiedDiff(diff);
  assert.deepEqual(
    lines.map((l) => l.kind),
    ["meta", "meta", "hunk", "del", "add", "ctx"],
  );
  assert.equal(lines[3].text, "-old line");
});
