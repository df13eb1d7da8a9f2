/** Typed client for the discrimination-game HTTP API.
 *
 * The service exposes exactly three endpoints:
 *   GET  /api/challenge -> { id, n, matrix }
 *   POST /api/guess     -> { correct, true_label, running_accuracy }
 *   GET  /api/stats     -> { total, correct, accuracy, by_label }
 *
 * Every payload is validated before it reaches game state, so a malformed
 * response surfaces as a FormatError rather than a half-rendered board.
 */

export type Guess = "real" | "fake";

export const GUESSES: readonly Guess[] = ["real", "fake"];

export interface ChallengePayload {
  id: string;
  n: number;
  matrix: number[][];
}

export interface GuessResult {
  correct: boolean;
  true_label: Guess;
  running_accuracy: number;
}

export interface LabelStats {
  total: number;
  correct: number;
  accuracy: number;
}

export interface StatsPayload {
  total: number;
  correct: number;
  accuracy: number;
  by_label: { real: LabelStats; fake: LabelStats };
}

/** Transport or server failure; `status` is null when the request never
 * produced an HTTP response (connection refused, DNS, aborted). */
export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number | null = null,
  ) {
    super(message);
    this.name = new.target.name;
  }
}

/** Response body did not match the API contract. */
export class FormatError extends ApiError {}

/** 409: the challenge was already answered on the server. */
export class ConflictError extends ApiError {}

function fail(message: string): never {
  throw new FormatError(message);
}

function asRecord(raw: unknown, what: string): Record<string, unknown> {
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    fail(`${what} is not an object`);
  }
  return raw as Record<string, unknown>;
}

function isGuess(x: unknown): x is Guess {
  return x === "real" || x === "fake";
}

export function parseChallenge(raw: unknown): ChallengePayload {
  const obj = asRecord(raw, "challenge payload");
  const { id, n, matrix } = obj;
  if (typeof id !== "string" || id.length === 0) fail("challenge id missing");
  if (typeof n !== "number" || !Number.isInteger(n) || n < 2) {
    fail(`challenge size must be an integer >= 2, got ${String(n)}`);
  }
  if (!Array.isArray(matrix) || matrix.length !== n) {
    fail(`matrix must have ${n} rows`);
  }
  for (const row of matrix) {
    if (!Array.isArray(row) || row.length !== n) {
      fail(`matrix rows must have ${n} entries`);
    }
    for (const x of row) {
      if (typeof x !== "number" || !Number.isFinite(x)) {
        fail("matrix entries must be finite numbers");
      }
      if (x < -1 - 1e-9 || x > 1 + 1e-9) {
        fail(`correlation ${x} outside [-1, 1]`);
      }
    }
  }
  return { id, n, matrix: matrix as number[][] };
}

export function parseGuessResult(raw: unknown): GuessResult {
  const obj = asRecord(raw, "guess result");
  const { correct, true_label, running_accuracy } = obj;
  if (typeof correct !== "boolean") fail("guess result lacks a boolean `correct`");
  if (!isGuess(true_label)) fail("guess result lacks a real/fake `true_label`");
  if (typeof running_accuracy !== "number" || !Number.isFinite(running_accuracy)) {
    fail("guess result lacks a numeric `running_accuracy`");
  }
  return { correct, true_label, running_accuracy };
}

function parseLabelStats(raw: unknown, what: string): LabelStats {
  const obj = asRecord(raw, what);
  const { total, correct, accuracy } = obj;
  if (typeof total !== "number" || typeof correct !== "number" || typeof accuracy !== "number") {
    fail(`${what} must carry numeric total/correct/accuracy`);
  }
  return { total, correct, accuracy };
}

export function parseStats(raw: unknown): StatsPayload {
  const obj = asRecord(raw, "stats payload");
  const top = parseLabelStats(obj, "stats payload");
  const by = asRecord(obj.by_label, "stats by_label");
  return {
    ...top,
    by_label: {
      real: parseLabelStats(by.real, "stats for real"),
      fake: parseLabelStats(by.fake, "stats for fake"),
    },
  };
}

/** The surface the game consumes; tests substitute stubs behind it. */
export interface GameApi {
  fetchChallenge(): Promise<ChallengePayload>;
  submitGuess(id: string, guess: Guess): Promise<GuessResult>;
  fetchStats(): Promise<StatsPayload>;
}

async function errorDetail(resp: Response): Promise<string> {
  try {
    const body = (await resp.json()) as { detail?: unknown };
    if (body && body.detail !== undefined) return String(body.detail);
  } catch {
    // fall through to the generic status text
  }
  return resp.statusText || "request failed";
}

export class HttpApi implements GameApi {
  constructor(private readonly baseUrl = "") {}

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    let resp: Response;
    try {
      resp = await fetch(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(`network failure: ${String(err)}`);
    }
    if (resp.status === 409) {
      throw new ConflictError(await errorDetail(resp), 409);
    }
    if (!resp.ok) {
      throw new ApiError(`${path}: ${resp.status} ${await errorDetail(resp)}`, resp.status);
    }
    try {
      return await resp.json();
    } catch {
      throw new FormatError(`${path} returned a non-JSON body`, resp.status);
    }
  }

  async fetchChallenge(): Promise<ChallengePayload> {
    return parseChallenge(await this.request("/api/challenge"));
  }

  async submitGuess(id: string, guess: Guess): Promise<GuessResult> {
    return parseGuessResult(
      await this.request("/api/guess", {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ id, guess }),
      }),
    );
  }

  async fetchStats(): Promise<StatsPayload> {
    return parseStats(await this.request("/api/stats"));
  }
}
