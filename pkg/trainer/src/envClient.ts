/**
 * Client for the simulator's RL environment protocol: newline-delimited
 * JSON over TCP. reset/step get a state reply; config/close are silent.
 */
import * as net from "node:net";

export interface StateInfo {
  b_mbps: number;
  tau_r: number;
  tau_l: number;
  k: number;
  t_ms: number;
}

export interface StateMsg {
  type: "state";
  obs: number[];
  reward: number | null;
  done: boolean;
  info: StateInfo;
}

export interface EnvConfig {
  trace?: string;
  k0?: number;
  td_us?: number;
  rho_us?: number;
  seed?: number;
  queue_capacity?: number;
  fwd_delay_us?: number;
  rev_delay_us?: number;
  random_loss_rate?: number;
  min_window_us?: number;
  history?: number;
  interval_us?: number;
  max_steps?: number;
  loop_trace?: boolean;
}

export class EnvProtocolError extends Error {}

export class EnvClient {
  private sock: net.Socket;
  private buf = "";
  private waiters: Array<{
    resolve: (msg: StateMsg) => void;
    reject: (err: Error) => void;
  }> = [];
  private closed = false;

  private constructor(sock: net.Socket) {
    this.sock = sock;
    sock.setEncoding("utf8");
    sock.on("data", (chunk: string) => this.onData(chunk));
    sock.on("error", (err) => this.failAll(err));
    sock.on("close", () => {
      this.closed = true;
      this.failAll(new EnvProtocolError("connection closed"));
    });
  }

  static connect(host: string, port: number, timeoutMs = 10_000): Promise<EnvClient> {
    return new Promise((resolve, reject) => {
      const sock = net.createConnection({ host, port });
      const timer = setTimeout(() => {
        sock.destroy();
        reject(new EnvProtocolError(`connect timeout to ${host}:${port}`));
      }, timeoutMs);
      sock.once("connect", () => {
        clearTimeout(timer);
        resolve(new EnvClient(sock));
      });
      sock.once("error", (err) => {
        clearTimeout(timer);
        reject(err);
      });
    });
  }

  private onData(chunk: string): void {
    this.buf += chunk;
    let idx: number;
    while ((idx = this.buf.indexOf("\n")) >= 0) {
      const line = this.buf.slice(0, idx);
      this.buf = this.buf.slice(idx + 1);
      if (!line.trim()) continue;
      let msg: any;
      try {
        msg = JSON.parse(line);
      } catch {
        this.failAll(new EnvProtocolError(`unparseable server line: ${line}`));
        return;
      }
      const waiter = this.waiters.shift();
      if (msg.type === "error") {
        const err = new EnvProtocolError(String(msg.msg ?? "server error"));
        if (waiter) waiter.reject(err);
        else this.failAll(err);
      } else if (waiter) {
        waiter.resolve(msg as StateMsg);
      }
      // replies without a waiter (e.g. busy notice) are dropped above
    }
  }

  private failAll(err: Error): void {
    const pending = this.waiters;
    this.waiters = [];
    for (const w of pending) w.reject(err);
  }

  private send(msg: Record<string, unknown>): void {
    if (this.closed) throw new EnvProtocolError("client is closed");
    this.sock.write(JSON.stringify(msg) + "\n");
  }

  private call(msg: Record<string, unknown>): Promise<StateMsg> {
    return new Promise((resolve, reject) => {
      this.waiters.push({ resolve, reject });
      try {
        this.send(msg);
      } catch (err) {
        this.waiters.pop();
        reject(err);
      }
    });
  }

  /** Fire-and-forget; errors surface on the next reset/step. */
  configure(cfg: EnvConfig): void {
    this.send({ type: "config", ...cfg });
  }

  reset(): Promise<StateMsg> {
    return this.call({ type: "reset" });
  }

  step(action: number): Promise<StateMsg> {
    return this.call({ type: "step", action });
  }

  close(): void {
    if (!this.closed) {
      try {
        this.send({ type: "close" });
      } catch {
        // connection already gone
      }
      this.sock.end();
      this.closed = true;
    }
  }
}
