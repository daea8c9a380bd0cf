/** Command-line front-end: train, evaluate, and random-baseline runs. */
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { EnvConfig } from "./envClient.js";
import { evaluate, randomBaseline, train } from "./train.js";

function envFromArgs(argv: Record<string, unknown>): EnvConfig {
  const env: EnvConfig = {};
  if (argv.trace) env.trace = String(argv.trace);
  if (argv.k0 !== undefined) env.k0 = Number(argv.k0);
  if (argv.td !== undefined) env.td_us = Number(argv.td);
  if (argv.rho !== undefined) env.rho_us = Number(argv.rho);
  if (argv.steps !== undefined) env.max_steps = Number(argv.steps);
  if (argv.envSeed !== undefined) env.seed = Number(argv.envSeed);
  if (argv.minWindowUs !== undefined) env.min_window_us = Number(argv.minWindowUs);
  return env;
}

const common = {
  host: { type: "string" as const, default: "127.0.0.1" },
  port: { type: "number" as const, demandOption: true },
  episodes: { type: "number" as const, default: 300 },
  seed: { type: "number" as const, default: 1 },
  trace: { type: "string" as const, describe: "trace path for the server" },
  k0: { type: "number" as const, default: 7 },
  td: { type: "number" as const, describe: "target delay, us" },
  rho: { type: "number" as const, describe: "sensitivity, us" },
  steps: { type: "number" as const, describe: "steps per episode (default 800)" },
  "env-seed": { type: "number" as const, describe: "simulator seed override" },
  "min-window-us": { type: "number" as const,
                     describe: "sliding minimum-delay window, us" },
};

await yargs(hideBin(process.argv))
  .command(
    "train",
    "run PPO-LSTM training against an env server",
    (y) =>
      y.options({
        ...common,
        checkpoint: { type: "string", default: "checkpoint.json" },
        curve: { type: "string", default: "training_curve.csv" },
        "no-learning": { type: "boolean", default: false,
                         describe: "ablation: collect without updates" },
      }),
    async (argv) => {
      const res = await train({
        host: argv.host,
        port: Number(argv.port),
        episodes: argv.episodes,
        seed: argv.seed,
        env: envFromArgs(argv),
        checkpointPath: argv.checkpoint,
        curvePath: argv.curve,
        learningDisabled: Boolean(argv["no-learning"]),
        onEpisode: (s) =>
          console.log(
            `episode ${s.episode}: reward ${s.meanReward.toFixed(4)} ` +
              `b ${s.meanB.toFixed(2)} tau_r ${s.meanTauR.toFixed(3)} ` +
              `tau_l ${s.meanTauL.toFixed(4)}`,
          ),
      });
      const tail = res.stats.slice(-100);
      const mean = tail.reduce((a, s) => a + s.meanReward, 0) / tail.length;
      console.log(`final-${tail.length}-episode mean reward: ${mean.toFixed(4)}`);
    },
  )
  .command(
    "evaluate",
    "greedy rollouts from a checkpoint",
    (y) =>
      y.options({
        ...common,
        checkpoint: { type: "string", demandOption: true },
        out: { type: "string", default: "evaluation.csv" },
      }),
    async (argv) => {
      const rows = await evaluate({
        host: argv.host,
        port: Number(argv.port),
        episodes: argv.episodes,
        seed: argv.seed,
        env: envFromArgs(argv),
        checkpointPath: argv.checkpoint,
        outPath: argv.out,
      });
      const mean = rows.reduce((a, s) => a + s.meanReward, 0) / rows.length;
      console.log(`evaluated ${rows.length} episodes, mean reward ${mean.toFixed(4)}`);
    },
  )
  .command(
    "baseline",
    "random-policy baseline rollouts",
    (y) => y.options({ ...common, out: { type: "string", default: "baseline.csv" } }),
    async (argv) => {
      const rows = await randomBaseline({
        host: argv.host,
        port: Number(argv.port),
        episodes: argv.episodes,
        seed: argv.seed,
        env: envFromArgs(argv),
        outPath: argv.out,
      });
      const mean = rows.reduce((a, s) => a + s.meanReward, 0) / rows.length;
      console.log(`random baseline: ${rows.length} episodes, mean reward ${mean.toFixed(4)}`);
    },
  )
  .demandCommand(1)
  .strict()
  .help()
  .parseAsync();
