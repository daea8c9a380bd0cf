/**
 * Rollout collection and the training/evaluation loops against a live
 * environment server.
 */
import * as fs from "node:fs";
import { DEFAULT_PPO_CONFIG, PpoConfig, validatePpoConfig } from "./config.js";
import { EnvClient, EnvConfig, StateMsg } from "./envClient.js";
import { ActorCriticLstm } from "./model.js";
import { PpoUpdater, Transition } from "./ppo.js";
import { Rng } from "./rng.js";

export interface EpisodeStats {
  episode: number;
  meanReward: number;
  meanB: number;
  meanTauR: number;
  meanTauL: number;
}

export const CURVE_HEADER = "episode,mean_reward,mean_b,mean_tau_r,mean_tau_l";

export function statsRow(s: EpisodeStats): string {
  return [
    s.episode,
    s.meanReward.toFixed(6),
    s.meanB.toFixed(6),
    s.meanTauR.toFixed(6),
    s.meanTauL.toFixed(6),
  ].join(",");
}

export type ActionPicker = (probs: Float32Array, rng: Rng) => number;

export const sampleAction: ActionPicker = (probs, rng) => rng.categorical(probs);
export const greedyAction: ActionPicker = (probs) => {
  let best = 0;
  for (let i = 1; i < probs.length; i++) if (probs[i] > probs[best]) best = i;
  return best;
};

export interface RolloutResult {
  transitions: Transition[];
  stats: Omit<EpisodeStats, "episode">;
}

/** Run one episode with the model policy; hidden state resets here. */
export async function collectEpisode(
  client: EnvClient,
  model: ActorCriticLstm,
  rng: Rng,
  pick: ActionPicker,
): Promise<RolloutResult> {
  const transitions: Transition[] = [];
  let state = model.zeroState();
  let msg: StateMsg = await client.reset();
  let rewardSum = 0;
  let bSum = 0;
  let tauRSum = 0;
  let tauLSum = 0;
  let n = 0;
  while (!msg.done) {
    const obs = Float32Array.from(msg.obs);
    const hidden = { h: state.h.slice(), c: state.c.slice() };
    const { probs, value, next } = model.act(obs, state);
    const action = pick(probs, rng);
    const logProb = Math.log(Math.max(probs[action], 1e-12));
    state = next;
    msg = await client.step(action);
    const reward = msg.reward ?? 0;
    transitions.push({ obs, action, reward, done: msg.done, value, logProb, hidden });
    rewardSum += reward;
    bSum += msg.info.b_mbps;
    tauRSum += msg.info.tau_r;
    tauLSum += msg.info.tau_l;
    n++;
  }
  return {
    transitions,
    stats: {
      meanReward: rewardSum / n,
      meanB: bSum / n,
      meanTauR: tauRSum / n,
      meanTauL: tauLSum / n,
    },
  };
}

/** Random-policy episode: uniform actions, no model involved. */
export async function collectRandomEpisode(
  client: EnvClient,
  rng: Rng,
): Promise<Omit<EpisodeStats, "episode">> {
  let msg = await client.reset();
  let rewardSum = 0;
  let bSum = 0;
  let tauRSum = 0;
  let tauLSum = 0;
  let n = 0;
  while (!msg.done) {
    msg = await client.step(rng.int(5));
    rewardSum += msg.reward ?? 0;
    bSum += msg.info.b_mbps;
    tauRSum += msg.info.tau_r;
    tauLSum += msg.info.tau_l;
    n++;
  }
  return {
    meanReward: rewardSum / n,
    meanB: bSum / n,
    meanTauR: tauRSum / n,
    meanTauL: tauLSum / n,
  };
}

export interface TrainOptions {
  host: string;
  port: number;
  episodes: number;
  seed: number;
  env: EnvConfig;
  ppo?: Partial<PpoConfig>;
  checkpointPath?: string;
  curvePath?: string;
  /** Ablation: collect with the policy but never update. */
  learningDisabled?: boolean;
  /** Checkpoint every N episodes (default 25). */
  checkpointEvery?: number;
  onEpisode?: (s: EpisodeStats) => void;
}

export interface TrainResult {
  stats: EpisodeStats[];
  model: ActorCriticLstm;
}

export async function train(opts: TrainOptions): Promise<TrainResult> {
  const cfg: PpoConfig = { ...DEFAULT_PPO_CONFIG, ...(opts.ppo ?? {}) };
  validatePpoConfig(cfg);
  const rng = new Rng(opts.seed);
  const historyLen = opts.env.history ?? 10;
  const model = new ActorCriticLstm(
    { inputSize: 4 * historyLen, hiddenSize: cfg.hiddenSize },
    opts.seed,
  );
  const updater = new PpoUpdater(model, cfg, rng);
  const client = await EnvClient.connect(opts.host, opts.port);
  const stats: EpisodeStats[] = [];
  const curve: string[] = [CURVE_HEADER];
  try {
    client.configure({ ...opts.env, seed: opts.env.seed ?? opts.seed });
    for (let ep = 0; ep < opts.episodes; ep++) {
      const rollout = await collectEpisode(client, model, rng, sampleAction);
      if (!opts.learningDisabled) {
        updater.update(rollout.transitions);
      }
      const row: EpisodeStats = { episode: ep, ...rollout.stats };
      stats.push(row);
      curve.push(statsRow(row));
      opts.onEpisode?.(row);
      const every = opts.checkpointEvery ?? 25;
      if (opts.checkpointPath && ((ep + 1) % every === 0 || ep + 1 === opts.episodes)) {
        fs.writeFileSync(
          opts.checkpointPath,
          model.serialize({ episode: ep, seed: opts.seed, env: opts.env, ppo: cfg }),
        );
      }
      if (opts.curvePath) {
        fs.writeFileSync(opts.curvePath, curve.join("\n") + "\n");
      }
    }
  } finally {
    client.close();
  }
  return { stats, model };
}

export interface EvalOptions {
  host: string;
  port: number;
  episodes: number;
  seed: number;
  env: EnvConfig;
  checkpointPath: string;
  outPath?: string;
}

export async function evaluate(opts: EvalOptions): Promise<EpisodeStats[]> {
  const { model } = ActorCriticLstm.deserialize(
    fs.readFileSync(opts.checkpointPath, "utf8"),
  );
  const rng = new Rng(opts.seed);
  const client = await EnvClient.connect(opts.host, opts.port);
  const rows: EpisodeStats[] = [];
  const lines = [CURVE_HEADER];
  try {
    client.configure({ ...opts.env, seed: opts.env.seed ?? opts.seed });
    for (let ep = 0; ep < opts.episodes; ep++) {
      const rollout = await collectEpisode(client, model, rng, greedyAction);
      const row: EpisodeStats = { episode: ep, ...rollout.stats };
      rows.push(row);
      lines.push(statsRow(row));
    }
  } finally {
    client.close();
  }
  if (opts.outPath) fs.writeFileSync(opts.outPath, lines.join("\n") + "\n");
  return rows;
}

export async function randomBaseline(
  opts: Omit<EvalOptions, "checkpointPath">,
): Promise<EpisodeStats[]> {
  const rng = new Rng(opts.seed);
  const client = await EnvClient.connect(opts.host, opts.port);
  const rows: EpisodeStats[] = [];
  const lines = [CURVE_HEADER];
  try {
    client.configure({ ...opts.env, seed: opts.env.seed ?? opts.seed });
    for (let ep = 0; ep < opts.episodes; ep++) {
      const s = await collectRandomEpisode(client, rng);
      const row: EpisodeStats = { episode: ep, ...s };
      rows.push(row);
      lines.push(statsRow(row));
    }
  } finally {
    client.close();
  }
  if (opts.outPath) fs.writeFileSync(opts.outPath, lines.join("\n") + "\n");
  return rows;
}
