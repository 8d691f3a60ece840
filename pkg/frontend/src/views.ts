/** Pure HTML-string renderers: state in, markup out, no fetching and no DOM
 * reads, so every view is unit-testable in node. */

import type { AuditSession, EvaluationRequest, LeaderboardEntry } from "./api.js";
import {
  formatAccuracy,
  formatBound,
  formatBytesGB,
  formatSeconds,
  formatTimestamp,
  headlineBound,
} from "./format.js";

export function escapeHtml(s: string): string {
  return s
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

export function staleBanner(visible: boolean): string {
  if (!visible) return "";
  return `<div class="banner stale" role="alert">Platform unreachable — showing last known state.</div>`;
}

export function leaderboardTable(entries: LeaderboardEntry[]): string {
  if (entries.length === 0) {
    return `<p class="empty">No completed evaluations yet.</p>`;
  }
  const rows = entries
    .map(
      (e) => `<tr data-request-id="${escapeHtml(e.request_id)}">
  <td>${escapeHtml(e.model)}</td>
  <td>${escapeHtml(e.dataset)}</td>
  <td>${escapeHtml(e.mode)}</td>
  <td class="num">${formatAccuracy(e.accuracy)}</td>
  <td class="num">${formatSeconds(e.time_per_sample_s)}</td>
  <td class="num">${e.num_samples}</td>
  <td class="num">${formatBytesGB(e.total_communication_bytes)}</td>
  <td>${formatTimestamp(e.completed_at)}</td>
</tr>`,
    )
    .join("\n");
  return `<table class="leaderboard">
<thead><tr>
  <th>Model</th><th>Dataset</th><th>Mode</th><th>Accuracy</th>
  <th>Time / sample</th><th>Samples</th><th>Total communication</th><th>Completed</th>
</tr></thead>
<tbody>
${rows}
</tbody>
</table>`;
}

const TERMINAL_STATES = new Set(["Completed", "Failed", "Refused"]);

export function requestCard(req: EvaluationRequest, inlineError?: string): string {
  const actionable = req.state === "Requested";
  const buttons = actionable
    ? `<div class="actions">
  <button data-action="approve" data-rid="${escapeHtml(req.id)}">Approve</button>
  <button data-action="refuse" data-rid="${escapeHtml(req.id)}">Refuse</button>
</div>`
    : "";
  const error = inlineError
    ? `<p class="error" role="alert">${escapeHtml(inlineError)}</p>`
    : "";
  const reason =
    req.failure_reason && TERMINAL_STATES.has(req.state)
      ? `<p class="reason">${escapeHtml(req.failure_reason)}</p>`
      : "";
  const record = req.record
    ? `<p class="record">accuracy ${formatAccuracy(
        (req.record as { accuracy: { numerator: number; denominator: number; decimal: number } })
          .accuracy,
      )}</p>`
    : "";
  return `<div class="card request state-${req.state.toLowerCase()}" data-rid="${escapeHtml(req.id)}">
  <h3>${escapeHtml(req.model)} on ${escapeHtml(req.dataset)} <span class="mode">${escapeHtml(req.mode)}</span></h3>
  <p class="state">${req.state}</p>
  <p class="meta">by ${escapeHtml(req.created_by)} at ${formatTimestamp(req.created_at)}</p>
${record}${reason}${buttons}${error}
</div>`;
}

export function requestList(
  reqs: EvaluationRequest[],
  errors: Map<string, string> = new Map(),
): string {
  if (reqs.length === 0) return `<p class="empty">No evaluation requests.</p>`;
  return reqs
    .slice()
    .sort((a, b) => b.updated_at - a.updated_at)
    .map((r) => requestCard(r, errors.get(r.id)))
    .join("\n");
}

export function auditConsole(session: AuditSession): string {
  const verdict = session.verdict
    ? `<p class="verdict verdict-${session.verdict.toLowerCase()}">${session.verdict}</p>`
    : `<p class="verdict pending">in progress (${escapeHtml(session.state)})</p>`;
  const reason = session.rejection_reason
    ? `<p class="reason">${escapeHtml(session.rejection_reason)}</p>`
    : "";
  const rows = (session.indices ?? [])
    .map((idx) => {
      const bit = session.per_index_results[String(idx)];
      const cls = bit === 1 ? "pass" : bit === 0 ? "fail" : "pending";
      const mark = bit === 1 ? "ok" : bit === 0 ? "failed" : "…";
      return `<tr class="${cls}"><td class="num">${idx}</td><td>${mark}</td></tr>`;
    })
    .join("\n");
  return `<div class="card audit" data-session-id="${escapeHtml(session.session_id)}">
  <h3>Audit ${escapeHtml(session.session_id)} <span class="mode">${session.variant}</span></h3>
  <p class="params">κ = ${session.kappa}, α = ${session.alpha},
    bound ${headlineBound(session.bound)} (${formatBound(session.bound)})</p>
${verdict}${reason}
  <table class="indices"><thead><tr><th>Index</th><th>Result</th></tr></thead>
<tbody>
${rows}
</tbody></table>
</div>`;
}
