/**
 * Generalized advantage estimation.
 *
 * A_t = sum_i (gamma * lambda)^i * delta_{t+i}, truncated at episode
 * boundaries, with delta_t = r_t + gamma * V(s_{t+1}) - V(s_t).
 */

export interface GaeInput {
  rewards: number[];
  /** T+1 entries; values[T] bootstraps the final transition. */
  values: number[];
  dones: boolean[];
  gamma: number;
  lambda: number;
}

export function computeGae(input: GaeInput): number[] {
  const { rewards, values, dones, gamma, lambda } = input;
  const T = rewards.length;
  if (values.length !== T + 1 || dones.length !== T) {
    throw new Error(
      `shape mismatch: rewards ${T}, values ${values.length}, dones ${dones.length}`,
    );
  }
  const adv = new Array<number>(T);
  let carry = 0;
  for (let t = T - 1; t >= 0; t--) {
    const nonTerminal = dones[t] ? 0 : 1;
    const delta = rewards[t] + gamma * values[t + 1] * nonTerminal - values[t];
    carry = delta + gamma * lambda * nonTerminal * carry;
    adv[t] = carry;
  }
  return adv;
}

/** Discounted returns used as value targets: A_t + V(s_t). */
export function returnsFromAdvantages(adv: number[], values: number[]): number[] {
  return adv.map((a, t) => a + values[t]);
}
