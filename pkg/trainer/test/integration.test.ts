/**
 * End-to-end against the real simulator: spawns `nuwasim env-serve` and
 * drives training/evaluation through the wire protocol with short
 * episodes. Needs the python package installed (pip install -e ..).
 */
import { ChildProcess, spawn } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { EnvClient } from "../src/envClient.js";
import { collectEpisode, collectRandomEpisode, evaluate, train } from "../src/train.js";
import { ActorCriticLstm } from "../src/model.js";
import { Rng } from "../src/rng.js";
import { sampleAction } from "../src/train.js";

const PORT = 19870 + (process.pid % 100);
let server: ChildProcess;
let tmpDir: string;
let tracePath: string;

function writeTwoRegimeTrace(p: string): void {
  // alternating 2.4 / 0.6 Mbit/s regimes, 8 s period, 16 s total
  const lines: string[] = [];
  for (let seg = 0; seg < 2; seg++) {
    for (let half = 0; half < 2; half++) {
      const rate = half === 0 ? 0.2 : 0.05; // packets per ms
      const start = (seg * 2 + half) * 4000;
      let t = start;
      while (t < start + 4000) {
        lines.push(String(Math.floor(t)));
        t += 1 / rate;
      }
    }
  }
  fs.writeFileSync(p, lines.join("\n") + "\n");
}

beforeAll(async () => {
  tmpDir = fs.mkdtempSync(path.join(os.tmpdir(), "nuwa-trainer-"));
  tracePath = path.join(tmpDir, "two_regime.pps");
  writeTwoRegimeTrace(tracePath);
  server = spawn("python3", ["-m", "nuwasim.cli", "env-serve",
                             "--port", String(PORT), "--trace", tracePath],
                 { stdio: ["ignore", "pipe", "pipe"] });
  await new Promise<void>((resolve, reject) => {
    const timer = setTimeout(() => reject(new Error("server did not start")), 20_000);
    server.stdout!.on("data", (d: Buffer) => {
      if (d.toString().includes("serving")) {
        clearTimeout(timer);
        resolve();
      }
    });
    server.stderr!.on("data", (d: Buffer) => process.stderr.write(d));
    server.on("exit", (code) => reject(new Error(`server exited ${code}`)));
  });
}, 30_000);

afterAll(() => {
  server?.kill("SIGTERM");
});

describe("against the real environment server", () => {
  it("collects a full episode with the recurrent policy", async () => {
    const client = await EnvClient.connect("127.0.0.1", PORT);
    client.configure({ max_steps: 40, seed: 3, k0: 7 });
    const model = new ActorCriticLstm({ inputSize: 40, hiddenSize: 32 }, 1);
    const rollout = await collectEpisode(client, model, new Rng(1), sampleAction);
    client.close();
    expect(rollout.transitions.length).toBe(40);
    expect(rollout.stats.meanB).toBeGreaterThan(0);
    for (const tr of rollout.transitions) {
      expect(tr.obs.length).toBe(40);
      expect(Number.isFinite(tr.reward)).toBe(true);
    }
  }, 60_000);

  it("identity-only actions keep k fixed (heuristic equivalence)", async () => {
    const client = await EnvClient.connect("127.0.0.1", PORT);
    client.configure({ max_steps: 30, seed: 4, k0: 5 });
    let msg = await client.reset();
    while (!msg.done) {
      msg = await client.step(1);
      expect(msg.info.k).toBe(5);
    }
    client.close();
  }, 60_000);

  it("trains, checkpoints, and reloads deterministically", async () => {
    const ckpt = path.join(tmpDir, "ck.json");
    const curve = path.join(tmpDir, "curve.csv");
    const res = await train({
      host: "127.0.0.1",
      port: PORT,
      episodes: 3,
      seed: 11,
      env: { max_steps: 30, seed: 11, k0: 7 },
      ppo: { bpttLength: 8, epochsPerUpdate: 2, hiddenSize: 32 },
      checkpointPath: ckpt,
      curvePath: curve,
      checkpointEvery: 1,
    });
    expect(res.stats.length).toBe(3);
    const curveText = fs.readFileSync(curve, "utf8").trim().split("\n");
    expect(curveText[0]).toBe("episode,mean_reward,mean_b,mean_tau_r,mean_tau_l");
    expect(curveText.length).toBe(4);

    // greedy evaluation twice from the same checkpoint: identical CSVs
    const outA = path.join(tmpDir, "evalA.csv");
    const outB = path.join(tmpDir, "evalB.csv");
    await evaluate({ host: "127.0.0.1", port: PORT, episodes: 2, seed: 21,
                     env: { max_steps: 30, seed: 21 }, checkpointPath: ckpt,
                     outPath: outA });
    await evaluate({ host: "127.0.0.1", port: PORT, episodes: 2, seed: 21,
                     env: { max_steps: 30, seed: 21 }, checkpointPath: ckpt,
                     outPath: outB });
    expect(fs.readFileSync(outA, "utf8")).toBe(fs.readFileSync(outB, "utf8"));
  }, 300_000);

  it("random baseline runs and reports finite rewards", async () => {
    const client = await EnvClient.connect("127.0.0.1", PORT);
    client.configure({ max_steps: 25, seed: 6 });
    const stats = await collectRandomEpisode(client, new Rng(2));
    client.close();
    expect(Number.isFinite(stats.meanReward)).toBe(true);
  }, 60_000);
});
