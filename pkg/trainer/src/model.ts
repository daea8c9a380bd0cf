/**
 * Recurrent actor-critic: one LSTM cell shared by a softmax policy head
 * (5 actions) and a scalar value head. Weights are plain variables so the
 * hidden state can be snapshotted for truncated BPTT and checkpoints stay
 * self-describing JSON.
 */
import * as tf from "@tensorflow/tfjs";
import { Rng } from "./rng.js";

export const NUM_ACTIONS = 5;

export interface HiddenState {
  h: Float32Array;
  c: Float32Array;
}

export interface ModelConfig {
  inputSize: number;
  hiddenSize: number;
}

interface StepOut {
  logits: tf.Tensor2D;
  value: tf.Tensor1D;
  h: tf.Tensor2D;
  c: tf.Tensor2D;
}

export class ActorCriticLstm {
  readonly cfg: ModelConfig;
  wx: tf.Variable<tf.Rank.R2>;
  wh: tf.Variable<tf.Rank.R2>;
  b: tf.Variable<tf.Rank.R1>;
  wPolicy: tf.Variable<tf.Rank.R2>;
  bPolicy: tf.Variable<tf.Rank.R1>;
  wValue: tf.Variable<tf.Rank.R2>;
  bValue: tf.Variable<tf.Rank.R1>;

  constructor(cfg: ModelConfig, seed = 1) {
    this.cfg = cfg;
    const rng = new Rng(seed);
    const { inputSize, hiddenSize } = cfg;
    this.wx = tf.variable(orthogonalish(rng, inputSize, 4 * hiddenSize, 1.0));
    this.wh = tf.variable(orthogonalish(rng, hiddenSize, 4 * hiddenSize, 1.0));
    this.b = tf.variable(forgetBias(hiddenSize));
    this.wPolicy = tf.variable(orthogonalish(rng, hiddenSize, NUM_ACTIONS, 0.01));
    this.bPolicy = tf.variable(tf.zeros([NUM_ACTIONS]));
    this.wValue = tf.variable(orthogonalish(rng, hiddenSize, 1, 1.0));
    this.bValue = tf.variable(tf.zeros([1]));
  }

  variables(): tf.Variable[] {
    return [this.wx, this.wh, this.b, this.wPolicy, this.bPolicy,
            this.wValue, this.bValue];
  }

  zeroState(): HiddenState {
    const n = this.cfg.hiddenSize;
    return { h: new Float32Array(n), c: new Float32Array(n) };
  }

  /** One recurrent step for a [batch, inputSize] input. */
  step(x: tf.Tensor2D, h: tf.Tensor2D, c: tf.Tensor2D): StepOut {
    const n = this.cfg.hiddenSize;
    const z = tf.add(tf.add(tf.matMul(x, this.wx), tf.matMul(h, this.wh)), this.b);
    const [zi, zf, zg, zo] = tf.split(z, 4, 1) as tf.Tensor2D[];
    const i = tf.sigmoid(zi);
    const f = tf.sigmoid(zf);
    const g = tf.tanh(zg);
    const o = tf.sigmoid(zo);
    const cNext = tf.add(tf.mul(f, c), tf.mul(i, g)) as tf.Tensor2D;
    const hNext = tf.mul(o, tf.tanh(cNext)) as tf.Tensor2D;
    const logits = tf.add(tf.matMul(hNext, this.wPolicy), this.bPolicy) as tf.Tensor2D;
    const value = tf
      .add(tf.matMul(hNext, this.wValue), this.bValue)
      .reshape([x.shape[0]]) as tf.Tensor1D;
    return { logits, value, h: hNext, c: cNext };
  }

  /** Policy/value for a single observation; advances the hidden state. */
  act(obs: Float32Array, state: HiddenState): {
    probs: Float32Array;
    value: number;
    next: HiddenState;
  } {
    return tf.tidy(() => {
      const x = tf.tensor2d(obs, [1, this.cfg.inputSize]);
      const h = tf.tensor2d(state.h, [1, this.cfg.hiddenSize]);
      const c = tf.tensor2d(state.c, [1, this.cfg.hiddenSize]);
      const out = this.step(x, h, c);
      const probs = tf.softmax(out.logits).dataSync() as Float32Array;
      const value = out.value.dataSync()[0];
      const next = {
        h: out.h.dataSync() as Float32Array,
        c: out.c.dataSync() as Float32Array,
      };
      return { probs: Float32Array.from(probs), value, next };
    });
  }

  /** Self-describing checkpoint with the config embedded. */
  serialize(extra: Record<string, unknown> = {}): string {
    const weights: Record<string, { shape: number[]; data: number[] }> = {};
    const names = ["wx", "wh", "b", "wPolicy", "bPolicy", "wValue", "bValue"] as const;
    for (const name of names) {
      const v = this[name] as tf.Variable;
      weights[name] = { shape: v.shape.slice(), data: Array.from(v.dataSync()) };
    }
    return JSON.stringify({ format: "nuwa-ppo-lstm-v1", config: this.cfg,
                            extra, weights });
  }

  static deserialize(text: string): { model: ActorCriticLstm; extra: Record<string, unknown> } {
    const doc = JSON.parse(text);
    if (doc.format !== "nuwa-ppo-lstm-v1") {
      throw new Error(`unknown checkpoint format: ${doc.format}`);
    }
    const model = new ActorCriticLstm(doc.config as ModelConfig);
    const names = ["wx", "wh", "b", "wPolicy", "bPolicy", "wValue", "bValue"] as const;
    for (const name of names) {
      const w = doc.weights[name];
      if (!w) throw new Error(`checkpoint missing tensor ${name}`);
      const v = model[name] as tf.Variable;
      if (JSON.stringify(v.shape) !== JSON.stringify(w.shape)) {
        throw new Error(`checkpoint shape mismatch for ${name}`);
      }
      v.assign(tf.tensor(w.data, w.shape));
    }
    return { model, extra: doc.extra ?? {} };
  }
}

/** Scaled random orthogonal-ish init (QR-free: normalized gaussian columns). */
function orthogonalish(rng: Rng, rows: number, cols: number, gain: number): tf.Tensor2D {
  const data = new Float32Array(rows * cols);
  for (let j = 0; j < cols; j++) {
    let norm = 0;
    const col = new Float32Array(rows);
    for (let i = 0; i < rows; i++) {
      col[i] = rng.normal();
      norm += col[i] * col[i];
    }
    norm = Math.sqrt(norm) || 1;
    for (let i = 0; i < rows; i++) {
      data[i * cols + j] = (col[i] / norm) * gain;
    }
  }
  return tf.tensor2d(data, [rows, cols]);
}

/** Zero bias except the forget gate, initialized to 1. */
function forgetBias(hidden: number): tf.Tensor1D {
  const b = new Float32Array(4 * hidden);
  b.fill(1.0, hidden, 2 * hidden);
  return tf.tensor1d(b);
}
