// @vitest-environment jsdom
/**
 * End-to-end round trip against the real review service: seeds a label
 * space, starts the HTTP server, and drives the same store + renderer the
 * browser runs. Skipped when the service package is not installed.
 */

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { render } from "../src/render.js";
import { Store } from "../src/state.js";

const probe = spawnSync("python3", ["-c", "import openlabels"], { timeout: 60_000 });
const serviceAvailable = probe.status === 0;

const SEED_SCRIPT = `
import sys
from openlabels.labelspace import LabelSpace

space = LabelSpace()
a = space.add_label("tidal wave", "cluster-synthesis",
                    evidence=["the tidal wave struck the harbor"])
b = space.add_label("tsunami", "cluster-synthesis",
                    evidence=["tsunami warnings along the coast"])
c = space.add_label("bread baking", "cluster-synthesis")
d = space.add_label("sourdough", "cluster-synthesis")
space.add_pair(a.id, b.id, 0.6812344, judge_opinion="yes")
space.add_pair(c.id, d.id, 0.55)
space.save(sys.argv[1])
`;

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

async function startServer(labelspacePath: string): Promise<{ proc: ChildProcess; base: string }> {
  for (let attempt = 0; attempt < 3; attempt++) {
    const port = 21000 + Math.floor(Math.random() * 30000);
    const base = `http://127.0.0.1:${port}`;
    const proc = spawn(
      "python3",
      ["-m", "openlabels.cli", "serve",
       "--labelspace", labelspacePath,
       "--bind", `127.0.0.1:${port}`],
      { stdio: "ignore" },
    );
    const client = new ApiClient(base);
    const deadline = Date.now() + 15_000;
    while (Date.now() < deadline && proc.exitCode === null) {
      try {
        await client.health();
        return { proc, base };
      } catch {
        await sleep(100);
      }
    }
    proc.kill();
  }
  throw new Error("could not start the review service on any attempted port");
}

describe.skipIf(!serviceAvailable)("round trip against the live service", () => {
  let workdir: string;
  let proc: ChildProcess;
  let base: string;
  let client: ApiClient;

  beforeAll(async () => {
    workdir = mkdtempSync(join(tmpdir(), "review-ui-"));
    const labelspacePath = join(workdir, "labelspace.json");
    const seeded = spawnSync("python3", ["-c", SEED_SCRIPT, labelspacePath], {
      timeout: 60_000,
    });
    expect(seeded.status).toBe(0);
    ({ proc, base } = await startServer(labelspacePath));
    client = new ApiClient(base);
  }, 90_000);

  afterAll(() => {
    proc?.kill();
    if (workdir) {
      rmSync(workdir, { recursive: true, force: true });
    }
  });

  it("lists both seeded pairs, most similar first, and renders them", async () => {
    const store = new Store(client);
    await store.refresh();

    expect(store.state.pairs).toHaveLength(2);
    expect(store.state.pairs.map((card) => card.pair.similarity)).toEqual([0.681234, 0.55]);
    expect(store.state.pairs[0]!.pair.judge_opinion).toBe("yes");

    document.body.innerHTML = '<div id="app"></div>';
    const root = document.getElementById("app")!;
    render(root, store.state);

    expect(root.querySelectorAll(".pair-card")).toHaveLength(2);
    expect(root.querySelector(".pair-sim")!.textContent).toBe("0.68");
    expect(root.querySelector(".judge")!.textContent).toContain("yes");
    expect(root.querySelector(".evidence li")!.textContent)
      .toBe("the tidal wave struck the harbor");
  });

  it("applies remove_b on the server and strictly increases the version", async () => {
    const store = new Store(client);
    await store.refresh();
    const before = store.state.version!;
    const target = store.state.pairs[0]!.pair; // tidal wave vs tsunami

    await store.submitDecision(target.id, "remove_b");

    const labels = await client.labels();
    const tsunami = labels.labels.find((l) => l.name === "tsunami")!;
    expect(tsunami.status).toBe("removed");
    expect(store.state.version!).toBeGreaterThan(before);
    expect(store.state.pairs).toHaveLength(1);
    expect(store.state.feed[0]!.text).toContain("tsunami");
  });

  it("applies a concurrent duplicate decision exactly once and surfaces the conflict", async () => {
    const first = new Store(client);
    const second = new Store(client);
    await Promise.all([first.refresh(), second.refresh()]);
    const pairId = first.state.pairs[0]!.pair.id; // bread baking vs sourdough

    await Promise.all([
      first.submitDecision(pairId, "remove_b"),
      second.submitDecision(pairId, "remove_b"),
    ]);

    const winners = [first, second].filter((store) => store.state.feed.length === 1);
    const losers = [first, second].filter((store) => store.state.banner?.kind === "stale");
    expect(winners).toHaveLength(1);
    expect(losers).toHaveLength(1);
    expect(winners[0]).not.toBe(losers[0]);

    // Exactly one mutation landed: sourdough removed, bread baking intact,
    // and the server sits at the winner's confirmed version.
    const labels = await client.labels();
    expect(labels.labels.find((l) => l.name === "sourdough")!.status).toBe("removed");
    expect(labels.labels.find((l) => l.name === "bread baking")!.status).toBe("active");
    expect(labels.version).toBe(winners[0]!.state.feed[0]!.version);

    const health = await client.health();
    expect(health.pending_pairs).toBe(0);
    expect(first.state.pairs).toHaveLength(0);
    expect(second.state.pairs).toHaveLength(0);

    // The losing session shows the conflict to its user.
    document.body.innerHTML = '<div id="app"></div>';
    const root = document.getElementById("app")!;
    render(root, losers[0]!.state);
    expect(root.querySelector(".banner-stale")).not.toBeNull();
    expect(root.querySelector(".queue .empty")!.textContent).toBe("no pending pairs");
  });
});
