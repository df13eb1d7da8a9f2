/** Session state for the discrimination game.
 *
 * Holds the current challenge, the answer history, and the last feedback.
 * The score is a fold over the history, so `correct <= answered` holds by
 * construction, and a new challenge is fetched only after the previous one
 * was answered or skipped. At most one request is in flight at a time.
 *
 * Failure handling:
 *   - network failure while guessing keeps the same challenge so `retry()`
 *     re-submits it (nothing is lost);
 *   - 409 means the server already counted an answer for this challenge, so
 *     the client drops it and fetches a fresh one;
 *   - a malformed challenge payload becomes an error state with `retry()`
 *     re-fetching.
 */

import { ChallengePayload, ConflictError, GameApi, Guess, GuessResult } from "./api.js";

export interface Feedback {
  guess: Guess;
  trueLabel: Guess;
  correct: boolean;
}

export type Phase = "idle" | "loading" | "ready" | "submitting" | "error";

export class GameSession {
  private _challenge: ChallengePayload | null = null;
  private _history: Feedback[] = [];
  private _feedback: Feedback | null = null;
  private _error: string | null = null;
  private _phase: Phase = "idle";
  private _retryAction: (() => Promise<void>) | null = null;
  private _listeners: Array<() => void> = [];

  constructor(private readonly api: GameApi) {}

  get challenge(): ChallengePayload | null {
    return this._challenge;
  }

  get history(): readonly Feedback[] {
    return this._history;
  }

  get answered(): number {
    return this._history.length;
  }

  get correct(): number {
    return this._history.filter((f) => f.correct).length;
  }

  get feedback(): Feedback | null {
    return this._feedback;
  }

  get error(): string | null {
    return this._error;
  }

  get phase(): Phase {
    return this._phase;
  }

  scoreLine(): string {
    return `${this.correct} / ${this.answered}`;
  }

  onChange(listener: () => void): () => void {
    this._listeners.push(listener);
    return () => {
      this._listeners = this._listeners.filter((l) => l !== listener);
    };
  }

  private emit(): void {
    for (const listener of this._listeners) listener();
  }

  private enterError(err: unknown, retryAction: () => Promise<void>): void {
    this._error = err instanceof Error ? err.message : String(err);
    this._phase = "error";
    this._retryAction = retryAction;
    this.emit();
  }

  /** Fetch the next challenge. Only legal when nothing is unanswered. */
  async loadNext(): Promise<void> {
    if (this._phase === "loading" || this._phase === "submitting") return;
    this._phase = "loading";
    this._error = null;
    this._challenge = null;
    this.emit();
    try {
      this._challenge = await this.api.fetchChallenge();
      this._phase = "ready";
      this._retryAction = null;
      this.emit();
    } catch (err) {
      this.enterError(err, () => this.loadNext());
    }
  }

  /** Skip the displayed challenge without answering and fetch a fresh one. */
  async skip(): Promise<void> {
    if (this._phase !== "ready") return;
    this._challenge = null;
    this._phase = "idle";
    await this.loadNext();
  }

  async guess(guess: Guess): Promise<void> {
    const challenge = this._challenge;
    if (this._phase !== "ready" || challenge === null) {
      throw new Error("no unanswered challenge is displayed");
    }
    this._phase = "submitting";
    this._error = null;
    this.emit();
    let result: GuessResult;
    try {
      result = await this.api.submitGuess(challenge.id, guess);
    } catch (err) {
      if (err instanceof ConflictError) {
        // Already answered server-side; this attempt counts for nothing.
        this._challenge = null;
        this._phase = "idle";
        await this.loadNext();
        return;
      }
      // Keep the same challenge so retry re-submits it.
      this.enterError(err, () => this.guess(guess));
      return;
    }
    const fb: Feedback = { guess, trueLabel: result.true_label, correct: result.correct };
    this._history.push(fb);
    this._feedback = fb;
    this._challenge = null;
    this._phase = "idle";
    this.emit();
    await this.loadNext();
  }

  /** Re-run the operation that failed; no-op outside the error state. */
  async retry(): Promise<void> {
    if (this._phase !== "error" || this._retryAction === null) return;
    const action = this._retryAction;
    this._retryAction = null;
    this._error = null;
    this._phase = this._challenge !== null ? "ready" : "idle";
    await action();
  }
}
