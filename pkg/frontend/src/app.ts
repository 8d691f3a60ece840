/** Browser wiring: polls the API and mirrors it into the three views.
 * Rendering is last-write-wins keyed by server timestamps; a fetch failure
 * only raises the stale banner, it never clears the last known state. */

import { ApiError, EvaluationRequest, newIdempotencyKey, PlatformClient } from "./api.js";
import { auditConsole, leaderboardTable, requestList, staleBanner } from "./views.js";

const POLL_INTERVAL_MS = 2000;

interface AppState {
  client: PlatformClient;
  requests: Map<string, EvaluationRequest>;
  inlineErrors: Map<string, string>;
  auditIds: string[];
  stale: boolean;
  // one idempotency key per distinct create-form submission, so a
  // double-click replays the same request instead of creating two
  createKey: string | null;
  createKeyFor: string;
}

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

function mergeRequest(state: AppState, req: EvaluationRequest): void {
  const prev = state.requests.get(req.id);
  if (!prev || req.updated_at >= prev.updated_at) state.requests.set(req.id, req);
}

async function refresh(state: AppState): Promise<void> {
  try {
    const entries = await state.client.getLeaderboard();
    el("leaderboard").innerHTML = leaderboardTable(entries);
    const updates = await Promise.all(
      [...state.requests.keys()].map((rid) => state.client.getRequest(rid)),
    );
    updates.forEach((r) => mergeRequest(state, r));
    state.stale = false;
  } catch {
    state.stale = true;
  }
  el("banner").innerHTML = staleBanner(state.stale);
  el("requests").innerHTML = requestList([...state.requests.values()], state.inlineErrors);
}

async function refreshAudits(state: AppState): Promise<void> {
  const sessions = await Promise.all(state.auditIds.map((aid) => state.client.getAudit(aid)));
  el("audits").innerHTML = sessions.map(auditConsole).join("\n");
}

export function startApp(): void {
  const state: AppState = {
    client: new PlatformClient(window.location.origin.replace(/:\d+$/, ":8400")),
    requests: new Map(),
    inlineErrors: new Map(),
    auditIds: [],
    stale: false,
    createKey: null,
    createKeyFor: "",
  };

  const identityInput = el("identity") as HTMLInputElement;
  identityInput.addEventListener("change", () => {
    state.client = state.client.withIdentity(identityInput.value.trim());
  });

  el("create-form").addEventListener("submit", async (ev) => {
    ev.preventDefault();
    const model = (el("create-model") as HTMLInputElement).value.trim();
    const dataset = (el("create-dataset") as HTMLInputElement).value.trim();
    const mode = (el("create-mode") as HTMLSelectElement).value;
    const formKey = `${model}|${dataset}|${mode}`;
    if (state.createKey === null || state.createKeyFor !== formKey) {
      state.createKey = newIdempotencyKey();
      state.createKeyFor = formKey;
    }
    try {
      const req = await state.client.createRequest(model, dataset, mode, state.createKey);
      mergeRequest(state, req);
      state.createKey = null;
    } catch (err) {
      el("create-error").textContent = err instanceof ApiError ? err.message : String(err);
    }
    await refresh(state);
  });

  el("requests").addEventListener("click", async (ev) => {
    const button = (ev.target as HTMLElement).closest("button[data-action]");
    if (!(button instanceof HTMLButtonElement)) return;
    const rid = button.dataset.rid ?? "";
    button.disabled = true; // the lifecycle makes a second call a no-op anyway
    try {
      const req =
        button.dataset.action === "approve"
          ? await state.client.approveRequest(rid)
          : await state.client.refuseRequest(rid);
      mergeRequest(state, req);
      state.inlineErrors.delete(rid);
    } catch (err) {
      state.inlineErrors.set(rid, err instanceof ApiError ? err.message : String(err));
    }
    await refresh(state);
  });

  el("audit-form").addEventListener("submit", async (ev) => {
    ev.preventDefault();
    const dataset = (el("audit-dataset") as HTMLInputElement).value.trim();
    const kappa = Number((el("audit-kappa") as HTMLInputElement).value);
    try {
      const session = await state.client.createAudit({ dataset, kappa });
      state.auditIds.push(session.session_id);
      await refreshAudits(state);
    } catch (err) {
      el("audit-error").textContent = err instanceof ApiError ? err.message : String(err);
    }
  });

  void refresh(state);
  setInterval(() => void refresh(state), POLL_INTERVAL_MS);
}

startApp();
