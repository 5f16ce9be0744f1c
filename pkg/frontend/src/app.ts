// Browser entry point. `?replay_game=<id>` opens the replay viewer; otherwise
// the page joins a lobby (`?lobby=`, `?name=`) and plays live. All state shown
// comes from server syncs or from folding the recorded event log.

import { GameController } from "./controller.js";
import { foldTo, timelineMarks } from "./replay.js";
import type { Frame } from "./replay.js";
import { HexRenderer, sceneFromFrame, sceneFromObservation } from "./render.js";
import type { GameEventView, GameRecordView } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function showBanner(text: string): void {
  const banner = el<HTMLDivElement>("banner");
  banner.textContent = text;
  banner.style.display = "block";
}

function setStatus(text: string): void {
  el<HTMLDivElement>("status").textContent = text;
}

// ---------------------------------------------------------------------------
// Live play
// ---------------------------------------------------------------------------

function runLive(params: URLSearchParams): void {
  const lobby = params.get("lobby") ?? "default";
  const name = params.get("name") ?? `player-${Math.floor(Math.random() * 10000)}`;
  const proto = location.protocol === "https:" ? "wss" : "ws";
  const ws = new WebSocket(`${proto}://${location.host}/ws/${lobby}`);
  const controller = new GameController(
    { send: (text) => ws.send(text), close: () => ws.close() },
    { lobbyId: lobby, displayName: name },
  );
  const renderer = new HexRenderer(el<HTMLCanvasElement>("map"));

  ws.onopen = () => controller.join();
  ws.onmessage = (evt) => controller.handleMessage(String(evt.data));
  ws.onclose = () => {
    if (controller.phase !== "over") showBanner("connection lost; the game ended");
  };
  ws.onerror = () => showBanner("websocket error");

  const composer = el<HTMLInputElement>("composer");
  composer.addEventListener("keydown", (evt) => {
    if (evt.key === "Enter" && controller.sendInstruction(composer.value)) {
      composer.value = "";
    }
    evt.stopPropagation();
  });
  el<HTMLButtonElement>("btn-done").onclick = () => controller.keyInput("f");
  el<HTMLButtonElement>("btn-cancel").onclick = () => controller.keyInput("c");
  el<HTMLButtonElement>("btn-endturn").onclick = () => controller.keyInput("e");
  document.addEventListener("keydown", (evt) => {
    if (evt.target === composer) return;
    if (controller.keyInput(evt.key) !== null) evt.preventDefault();
  });

  controller.onChange = () => {
    try {
      renderLive(controller, renderer);
    } catch (err) {
      showBanner(`render failed: ${err}`);
    }
  };
  setStatus(`joining ${lobby} as ${name}…`);
}

function renderLive(controller: GameController, renderer: HexRenderer): void {
  const obs = controller.observation;
  if (controller.phase === "waiting") {
    setStatus(`waiting in the lobby (position ${controller.queuePosition})`);
  } else if (controller.phase === "playing" && obs) {
    const turn = obs.turn;
    const time = turn.time_remaining == null ? "" : ` | ${Math.ceil(turn.time_remaining)}s left`;
    const who = controller.myTurn ? "your turn" : "partner's turn (keys locked)";
    setStatus(
      `${controller.role} | score ${turn.score} | turns left ${turn.turns_remaining} | ` +
      `steps ${turn.steps_remaining}${time} | ${who}` +
      (obs.selected_invalid ? " | selected cards do not form a set" : ""),
    );
  } else if (controller.phase === "over") {
    const score = controller.finalScore ?? obs?.turn.score ?? 0;
    setStatus(`game over: score ${score}${controller.abandoned ? " (abandoned)" : ""}`);
  }
  if (obs) {
    renderer.draw(sceneFromObservation(obs));
    renderInstructions(obs.instructions, controller.role === "leader");
  }
  el<HTMLDivElement>("toasts").innerHTML = controller.toasts
    .slice(-3)
    .map((t) => `<div class="toast">${escapeHtml(t.text)}</div>`)
    .join("");
  const prompts = controller.tutorialPrompts;
  const overlay = el<HTMLDivElement>("tutorial");
  if (prompts.length) {
    overlay.style.display = "block";
    overlay.innerHTML = prompts.map((p) => `<p>${p.step + 1}. ${escapeHtml(p.text)}</p>`).join("");
  }
  el<HTMLDivElement>("composer-row").style.display = controller.role === "leader" ? "flex" : "none";
  el<HTMLButtonElement>("btn-done").style.display = controller.role === "follower" ? "inline" : "none";
  el<HTMLButtonElement>("btn-cancel").style.display = controller.role === "leader" ? "inline" : "none";
}

function renderInstructions(instructions: { text: string; status: string }[], full: boolean): void {
  const list = el<HTMLUListElement>("instructions");
  list.innerHTML = instructions
    .map((i) => `<li class="ins-${i.status}"><span>${i.status}</span> ${escapeHtml(i.text)}</li>`)
    .join("");
  el<HTMLDivElement>("queue-note").textContent = full
    ? ""
    : "queued instructions stay hidden until they activate";
}

function escapeHtml(text: string): string {
  return text.replace(/[&<>"']/g, (ch) => `&#${ch.charCodeAt(0)};`);
}

// ---------------------------------------------------------------------------
// Replay viewer
// ---------------------------------------------------------------------------

async function runReplay(gameId: string): Promise<void> {
  setStatus(`loading replay of ${gameId}…`);
  const recordResp = await fetch(`/data/games/${gameId}`);
  if (!recordResp.ok) {
    showBanner(`unknown game ${gameId}`);
    return;
  }
  const record = (await recordResp.json()) as GameRecordView;
  const eventsResp = await fetch(`/data/games/${gameId}/events`);
  const events = (await eventsResp.json()).events as GameEventView[];

  const renderer = new HexRenderer(el<HTMLCanvasElement>("map"));
  el<HTMLDivElement>("replay-controls").style.display = "flex";
  const slider = el<HTMLInputElement>("scrub");
  slider.min = "1";
  slider.max = String(events.length);
  let index = events.length;
  let playing = false;

  const show = () => {
    let frame: Frame;
    try {
      frame = foldTo(events, index);
    } catch (err) {
      showBanner(`replay failed: ${err}`);
      return;
    }
    slider.value = String(index);
    renderer.draw(sceneFromFrame(frame));
    renderInstructions(frame.instructions, true);
    setStatus(
      `replay ${gameId} | event ${index}/${events.length} | score ${frame.score} ` +
      `(final ${record.final_score}) | ${frame.active_role}'s turn, ` +
      `${frame.turns_remaining} turns left${frame.over ? " | game over" : ""}`,
    );
  };

  el<HTMLButtonElement>("btn-back").onclick = () => { index = Math.max(1, index - 1); show(); };
  el<HTMLButtonElement>("btn-fwd").onclick = () => { index = Math.min(events.length, index + 1); show(); };
  el<HTMLButtonElement>("btn-start").onclick = () => { index = 1; show(); };
  el<HTMLButtonElement>("btn-end").onclick = () => { index = events.length; show(); };
  el<HTMLButtonElement>("btn-play").onclick = () => { playing = !playing; };
  slider.oninput = () => { index = Number(slider.value); show(); };
  setInterval(() => {
    if (playing && index < events.length) {
      index += 1;
      show();
    }
  }, 120);

  const marks = el<HTMLUListElement>("instructions");
  marks.innerHTML = timelineMarks(events)
    .map((m) => `<li class="mark" data-i="${m.index}">@${m.index} ${escapeHtml(m.label)}</li>`)
    .join("");
  marks.querySelectorAll<HTMLLIElement>(".mark").forEach((li) => {
    li.onclick = () => { index = Number(li.dataset.i); show(); };
  });
  show();
}

// ---------------------------------------------------------------------------

window.addEventListener("DOMContentLoaded", () => {
  const params = new URLSearchParams(location.search);
  const replayId = params.get("replay_game");
  try {
    if (replayId) {
      void runReplay(replayId);
    } else {
      runLive(params);
    }
  } catch (err) {
    showBanner(`startup failed: ${err}`);
  }
});
