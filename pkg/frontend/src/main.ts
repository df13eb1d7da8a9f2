/** Page wiring: one canvas, two guess buttons, a score line, and an error
 * banner with a retry button. All state lives in GameSession. */

import { HttpApi } from "./api.js";
import { GameSession } from "./game.js";
import { paintHeatmap } from "./heatmap.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing page element #${id}`);
  return node as T;
}

const session = new GameSession(new HttpApi(""));

const board = el<HTMLCanvasElement>("board");
const scoreEl = el<HTMLElement>("score");
const feedbackEl = el<HTMLElement>("feedback");
const banner = el<HTMLElement>("error-banner");
const errorText = el<HTMLElement>("error-text");
const retryBtn = el<HTMLButtonElement>("retry");
const realBtn = el<HTMLButtonElement>("guess-real");
const fakeBtn = el<HTMLButtonElement>("guess-fake");
const skipBtn = el<HTMLButtonElement>("skip");

function render(): void {
  scoreEl.textContent = session.scoreLine();

  const fb = session.feedback;
  if (fb === null) {
    feedbackEl.textContent = "Is this correlation matrix real or generated?";
    feedbackEl.className = "neutral";
  } else {
    feedbackEl.textContent = fb.correct
      ? `Correct — it was ${fb.trueLabel}.`
      : `Wrong — it was ${fb.trueLabel}.`;
    feedbackEl.className = fb.correct ? "good" : "bad";
  }

  const canGuess = session.phase === "ready" && session.challenge !== null;
  realBtn.disabled = !canGuess;
  fakeBtn.disabled = !canGuess;
  skipBtn.disabled = !canGuess;

  banner.classList.toggle("hidden", session.phase !== "error");
  errorText.textContent = session.error ?? "";

  if (session.challenge !== null) {
    board.classList.remove("hidden");
    paintHeatmap(board, session.challenge.matrix);
  } else if (session.phase === "error") {
    board.classList.add("hidden");
  }
}

session.onChange(render);
realBtn.addEventListener("click", () => void session.guess("real"));
fakeBtn.addEventListener("click", () => void session.guess("fake"));
skipBtn.addEventListener("click", () => void session.skip());
retryBtn.addEventListener("click", () => void session.retry());

render();
void session.loadNext();
