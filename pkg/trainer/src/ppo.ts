/**
 * Clipped-surrogate PPO update over truncated-BPTT windows of a
 * recurrent trajectory. All windows are batched into one unrolled
 * sequence graph per epoch; each window restarts from the hidden state
 * snapshot captured during collection.
 */
import * as tf from "@tensorflow/tfjs";
import { PpoConfig } from "./config.js";
import { computeGae, returnsFromAdvantages } from "./gae.js";
import { ActorCriticLstm, HiddenState, NUM_ACTIONS } from "./model.js";
import { Rng } from "./rng.js";

export interface Transition {
  obs: Float32Array;
  action: number;
  reward: number;
  done: boolean;
  value: number;
  logProb: number;
  /** Hidden state BEFORE consuming obs; restarts BPTT windows. */
  hidden: HiddenState;
}

/**
 * Scalar clipped objective for one sample (reference semantics; the
 * batched tensor version lives in the update below).
 */
export function clippedObjective(
  logProbNew: number,
  logProbOld: number,
  advantage: number,
  epsilon: number,
): number {
  const ratio = Math.exp(logProbNew - logProbOld);
  const clipped = Math.min(Math.max(ratio, 1 - epsilon), 1 + epsilon);
  return Math.min(ratio * advantage, clipped * advantage);
}

export interface UpdateStats {
  policyLoss: number;
  valueLoss: number;
  entropy: number;
}

interface Batch {
  L: number;
  nW: number;
  obs: tf.Tensor3D; // [L, nW, inputSize]
  actions: tf.Tensor2D; // [L, nW] int32
  oldLogProbs: tf.Tensor2D; // [L, nW]
  adv: tf.Tensor2D; // [L, nW]
  rets: tf.Tensor2D; // [L, nW]
  valid: tf.Tensor2D; // [L, nW] 0/1
  keep: tf.Tensor3D; // [L, nW, 1]; 0 resets the state after a done step
  h0: tf.Tensor2D; // [nW, hidden]
  c0: tf.Tensor2D;
}

export class PpoUpdater {
  private optimizer: tf.Optimizer;

  constructor(
    readonly model: ActorCriticLstm,
    readonly cfg: PpoConfig,
    private rng: Rng,
  ) {
    this.optimizer = tf.train.adam(cfg.learningRate);
  }

  /**
   * One PPO update over a completed rollout: GAE advantages, then
   * epochsPerUpdate full passes over the batched BPTT windows.
   */
  update(traj: Transition[], bootstrapValue = 0): UpdateStats {
    const cfg = this.cfg;
    const values = traj.map((t) => t.value).concat([bootstrapValue]);
    const adv = computeGae({
      rewards: traj.map((t) => t.reward),
      values,
      dones: traj.map((t) => t.done),
      gamma: cfg.discount,
      lambda: cfg.gaeLambda,
    });
    const rets = returnsFromAdvantages(adv, values);
    const mean = adv.reduce((a, b) => a + b, 0) / adv.length;
    const sd =
      Math.sqrt(adv.reduce((a, b) => a + (b - mean) * (b - mean), 0) / adv.length) || 1;
    const advN = adv.map((a) => (a - mean) / sd);

    const batch = this.buildBatch(traj, advN, rets);
    let stats: UpdateStats = { policyLoss: 0, valueLoss: 0, entropy: 0 };
    try {
      for (let epoch = 0; epoch < cfg.epochsPerUpdate; epoch++) {
        const s = this.runEpoch(batch);
        stats = {
          policyLoss: stats.policyLoss + s.policyLoss / cfg.epochsPerUpdate,
          valueLoss: stats.valueLoss + s.valueLoss / cfg.epochsPerUpdate,
          entropy: stats.entropy + s.entropy / cfg.epochsPerUpdate,
        };
      }
    } finally {
      batch.obs.dispose();
      batch.actions.dispose();
      batch.oldLogProbs.dispose();
      batch.adv.dispose();
      batch.rets.dispose();
      batch.valid.dispose();
      batch.keep.dispose();
      batch.h0.dispose();
      batch.c0.dispose();
    }
    return stats;
  }

  private buildBatch(traj: Transition[], advN: number[], rets: number[]): Batch {
    const cfg = this.cfg;
    const inputSize = this.model.cfg.inputSize;
    const hiddenSize = this.model.cfg.hiddenSize;
    const L = Math.min(cfg.bpttLength, traj.length);
    const nW = Math.ceil(traj.length / L);
    const obs = new Float32Array(L * nW * inputSize);
    const actions = new Int32Array(L * nW);
    const oldLp = new Float32Array(L * nW);
    const advA = new Float32Array(L * nW);
    const retA = new Float32Array(L * nW);
    const valid = new Float32Array(L * nW);
    const keep = new Float32Array(L * nW).fill(1);
    const h0 = new Float32Array(nW * hiddenSize);
    const c0 = new Float32Array(nW * hiddenSize);
    for (let w = 0; w < nW; w++) {
      const base = w * L;
      h0.set(traj[base].hidden.h, w * hiddenSize);
      c0.set(traj[base].hidden.c, w * hiddenSize);
      for (let t = 0; t < L; t++) {
        const src = base + t;
        const dst = t * nW + w;
        if (src >= traj.length) {
          keep[dst] = 0;
          continue;
        }
        obs.set(traj[src].obs, dst * inputSize);
        actions[dst] = traj[src].action;
        oldLp[dst] = traj[src].logProb;
        advA[dst] = advN[src];
        retA[dst] = rets[src];
        valid[dst] = 1;
        if (traj[src].done) keep[dst] = 0;
      }
    }
    return {
      L,
      nW,
      obs: tf.tensor3d(obs, [L, nW, inputSize]),
      actions: tf.tensor2d(actions, [L, nW], "int32"),
      oldLogProbs: tf.tensor2d(oldLp, [L, nW]),
      adv: tf.tensor2d(advA, [L, nW]),
      rets: tf.tensor2d(retA, [L, nW]),
      valid: tf.tensor2d(valid, [L, nW]),
      keep: tf.tensor3d(keep, [L, nW, 1]),
      h0: tf.tensor2d(h0, [nW, hiddenSize]),
      c0: tf.tensor2d(c0, [nW, hiddenSize]),
    };
  }

  private runEpoch(batch: Batch): UpdateStats {
    const { model, cfg } = this;
    let out: UpdateStats = { policyLoss: 0, valueLoss: 0, entropy: 0 };
    const loss = this.optimizer.minimize(() => {
      const logitRows: tf.Tensor2D[] = [];
      const valueRows: tf.Tensor1D[] = [];
      let h = batch.h0;
      let c = batch.c0;
      for (let t = 0; t < batch.L; t++) {
        const x = batch.obs
          .slice([t, 0, 0], [1, batch.nW, model.cfg.inputSize])
          .reshape([batch.nW, model.cfg.inputSize]) as tf.Tensor2D;
        const step = model.step(x, h, c);
        logitRows.push(step.logits);
        valueRows.push(step.value);
        const keepT = batch.keep
          .slice([t, 0, 0], [1, batch.nW, 1])
          .reshape([batch.nW, 1]) as tf.Tensor2D;
        h = tf.mul(step.h, keepT) as tf.Tensor2D;
        c = tf.mul(step.c, keepT) as tf.Tensor2D;
      }
      const logits = tf.stack(logitRows) as tf.Tensor3D; // [L, nW, A]
      const flatLogits = logits.reshape([batch.L * batch.nW, NUM_ACTIONS]);
      const valuePred = tf.stack(valueRows).reshape([batch.L, batch.nW]);
      const logProbsAll = tf.logSoftmax(flatLogits);
      const oneHot = tf.oneHot(batch.actions.reshape([-1]), NUM_ACTIONS);
      const logProbNew = tf
        .sum(tf.mul(logProbsAll, oneHot), 1)
        .reshape([batch.L, batch.nW]);
      const ratio = tf.exp(tf.sub(logProbNew, batch.oldLogProbs));
      const unclipped = tf.mul(ratio, batch.adv);
      const clipped = tf.mul(
        tf.clipByValue(ratio, 1 - cfg.clipEpsilon, 1 + cfg.clipEpsilon),
        batch.adv,
      );
      const nValid = tf.sum(batch.valid);
      const wMean = (x: tf.Tensor) => tf.div(tf.sum(tf.mul(x, batch.valid)), nValid);
      const policyLoss = tf.neg(wMean(tf.minimum(unclipped, clipped)));
      const valueLoss = wMean(tf.squaredDifference(valuePred, batch.rets));
      const probs = tf.softmax(flatLogits);
      const entPer = tf
        .neg(tf.sum(tf.mul(probs, logProbsAll), 1))
        .reshape([batch.L, batch.nW]);
      const entropy = wMean(entPer);
      out = {
        policyLoss: policyLoss.dataSync()[0],
        valueLoss: valueLoss.dataSync()[0],
        entropy: entropy.dataSync()[0],
      };
      return tf.add(
        tf.add(policyLoss, tf.mul(cfg.valueCoeff, valueLoss)),
        tf.mul(-cfg.entropyCoeff, entropy),
      ) as tf.Scalar;
    }, false, model.variables());
    loss?.dispose();
    return out;
  }
}
