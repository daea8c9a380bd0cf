import { describe, expect, it } from "vitest";
import { computeGae, returnsFromAdvantages } from "../src/gae.js";
import { Rng } from "../src/rng.js";

/** Literal double-loop definition used as the oracle. */
function gaeBruteForce(
  rewards: number[],
  values: number[],
  dones: boolean[],
  gamma: number,
  lambda: number,
): number[] {
  const T = rewards.length;
  const adv = new Array<number>(T).fill(0);
  for (let t = 0; t < T; t++) {
    let factor = 1;
    for (let i = t; i < T; i++) {
      const nonTerminal = dones[i] ? 0 : 1;
      const delta = rewards[i] + gamma * values[i + 1] * nonTerminal - values[i];
      adv[t] += factor * delta;
      if (dones[i]) break;
      factor *= gamma * lambda;
    }
  }
  return adv;
}

describe("computeGae", () => {
  it("is zero for zero rewards and zero values", () => {
    const adv = computeGae({
      rewards: [0, 0, 0],
      values: [0, 0, 0, 0],
      dones: [false, false, false],
      gamma: 0.9,
      lambda: 0.9,
    });
    expect(adv).toEqual([0, 0, 0]);
  });

  it("reduces to the TD error at lambda = 0", () => {
    const rewards = [1, -2, 0.5];
    const values = [0.3, -0.1, 0.7, 0.2];
    const dones = [false, false, false];
    const adv = computeGae({ rewards, values, dones, gamma: 0.9, lambda: 0 });
    for (let t = 0; t < 3; t++) {
      const delta = rewards[t] + 0.9 * values[t + 1] - values[t];
      expect(adv[t]).toBeCloseTo(delta, 12);
    }
  });

  it("matches the hand recursion for undiscounted unit rewards", () => {
    const adv = computeGae({
      rewards: [1, 1, 1],
      values: [0, 0, 0, 0],
      dones: [false, false, true],
      gamma: 1,
      lambda: 1,
    });
    expect(adv).toEqual([3, 2, 1]);
  });

  it("rejects mismatched shapes", () => {
    expect(() =>
      computeGae({ rewards: [1], values: [0], dones: [false], gamma: 1, lambda: 1 }),
    ).toThrow(/shape/);
  });

  it("equals the double-loop definition on 1000 random instances", () => {
    const rng = new Rng(99);
    for (let trial = 0; trial < 1000; trial++) {
      const T = 1 + rng.int(32);
      const rewards = Array.from({ length: T }, () => rng.normal() * 5);
      const values = Array.from({ length: T + 1 }, () => rng.normal() * 3);
      const dones = Array.from({ length: T }, () => rng.next() < 0.15);
      const gamma = rng.next();
      const lambda = rng.next();
      const fast = computeGae({ rewards, values, dones, gamma, lambda });
      const slow = gaeBruteForce(rewards, values, dones, gamma, lambda);
      for (let t = 0; t < T; t++) {
        const denom = Math.max(Math.abs(slow[t]), 1e-30);
        expect(Math.abs(fast[t] - slow[t]) / denom).toBeLessThanOrEqual(1e-10);
      }
    }
  });

  it("value targets are advantages plus values", () => {
    const adv = [1, 2, 3];
    const values = [0.5, 0.5, 0.5, 9];
    expect(returnsFromAdvantages(adv, values)).toEqual([1.5, 2.5, 3.5]);
  });
});
