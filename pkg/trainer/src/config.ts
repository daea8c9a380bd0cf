/** Hyperparameters for the recurrent PPO update. */
export interface PpoConfig {
  clipEpsilon: number;
  discount: number;
  gaeLambda: number;
  epochsPerUpdate: number;
  /** Truncated-BPTT window length; also the minibatch sequence length. */
  bpttLength: number;
  learningRate: number;
  entropyCoeff: number;
  valueCoeff: number;
  hiddenSize: number;
}

export const DEFAULT_PPO_CONFIG: PpoConfig = {
  clipEpsilon: 0.2,
  discount: 0.99,
  gaeLambda: 0.95,
  epochsPerUpdate: 4,
  bpttLength: 16,
  learningRate: 3e-4,
  entropyCoeff: 0.01,
  valueCoeff: 0.5,
  hiddenSize: 64,
};

export function validatePpoConfig(cfg: PpoConfig): void {
  if (!(cfg.clipEpsilon > 0 && cfg.clipEpsilon < 1)) {
    throw new Error("clip epsilon must be in (0, 1)");
  }
  if (!(cfg.discount >= 0 && cfg.discount <= 1)) {
    throw new Error("discount must be in [0, 1]");
  }
  if (!(cfg.gaeLambda >= 0 && cfg.gaeLambda <= 1)) {
    throw new Error("gae lambda must be in [0, 1]");
  }
}
