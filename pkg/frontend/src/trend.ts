/** Qualitative trend checks over harness records.
 *
 * Consumes the records.csv an attack run writes and answers two
 * questions: does the per-round success rate rise with the repetition
 * count (local dips tolerated), and does the wavelet route beat the
 * dct route in total success on the hosts both routes attacked.
 */

import Papa from "papaparse";

export const RECORD_COLUMNS = [
  "host_id",
  "wm_id",
  "algo",
  "s_r",
  "s_g",
  "s_b",
  "embed_t",
  "true_class",
  "top_class",
  "p_true",
  "p_top",
  "success",
  "l2",
  "linf",
  "error",
] as const;

export interface RecordRow {
  hostId: string;
  algo: string;
  embedT: number;
  success: boolean;
  errored: boolean;
}

export class TrendError extends Error {}

export function parseRecordsCsv(text: string): RecordRow[] {
  const parsed = Papa.parse<string[]>(text.trim(), { skipEmptyLines: true });
  if (parsed.errors.length) {
    throw new TrendError(`records csv did not parse: ${parsed.errors[0].message}`);
  }
  const rows = parsed.data;
  if (!rows.length || rows[0].join(",") !== RECORD_COLUMNS.join(",")) {
    throw new TrendError(`unexpected records header: ${rows[0]?.join(",")}`);
  }
  const body = rows.slice(1);
  if (!body.length) {
    throw new TrendError("records csv has no data rows");
  }
  return body.map((cells, i) => {
    if (cells.length !== RECORD_COLUMNS.length) {
      throw new TrendError(`row ${i + 2} has ${cells.length} cells`);
    }
    const success = cells[11];
    if (success !== "true" && success !== "false") {
      throw new TrendError(`row ${i + 2} has malformed success cell '${success}'`);
    }
    return {
      hostId: cells[0],
      algo: cells[2],
      embedT: Number(cells[6]),
      success: success === "true",
      errored: cells[14] !== "",
    };
  });
}

export interface RoundRate {
  t: number;
  rate: number;
}

export interface AlgoTrend {
  algo: string;
  hosts: number;
  errors: number;
  rounds: RoundRate[];
  total: number;
  slope: number;
  dips: { t: number; drop: number }[];
  /** last-round rate at least the first-round rate and fitted slope >= 0 */
  risingTrend: boolean;
}

export interface TrendReport {
  algos: AlgoTrend[];
  comparison: {
    sharedHosts: number;
    dwtTotal: number;
    dctTotal: number;
    dwtAtLeastDct: boolean;
  } | null;
  divergences: string[];
}

function totalRate(rows: RecordRow[], hosts?: Set<string>): number {
  const ok = rows.filter((r) => !r.errored && (!hosts || hosts.has(r.hostId)));
  const attacked = new Set(ok.map((r) => r.hostId));
  if (!attacked.size) return 0;
  const won = new Set(ok.filter((r) => r.success).map((r) => r.hostId));
  return won.size / attacked.size;
}

function algoTrend(algo: string, rows: RecordRow[]): AlgoTrend {
  const ok = rows.filter((r) => !r.errored);
  const ts = [...new Set(ok.map((r) => r.embedT))].sort((a, b) => a - b);
  const rounds = ts.map((t) => {
    const atT = ok.filter((r) => r.embedT === t);
    const attacked = new Set(atT.map((r) => r.hostId));
    const won = new Set(atT.filter((r) => r.success).map((r) => r.hostId));
    return { t, rate: attacked.size ? won.size / attacked.size : 0 };
  });
  // least-squares slope of rate over round index
  const n = rounds.length;
  const meanX = (n - 1) / 2;
  const meanY = rounds.reduce((s, r) => s + r.rate, 0) / n;
  let num = 0;
  let den = 0;
  rounds.forEach((r, i) => {
    num += (i - meanX) * (r.rate - meanY);
    den += (i - meanX) ** 2;
  });
  const slope = den ? num / den : 0;
  const dips: { t: number; drop: number }[] = [];
  for (let i = 1; i < n; i++) {
    if (rounds[i].rate < rounds[i - 1].rate) {
      dips.push({ t: rounds[i].t, drop: rounds[i - 1].rate - rounds[i].rate });
    }
  }
  return {
    algo,
    hosts: new Set(ok.map((r) => r.hostId)).size,
    errors: rows.length - ok.length,
    rounds,
    total: totalRate(rows),
    slope,
    dips,
    risingTrend: n > 0 && rounds[n - 1].rate >= rounds[0].rate && slope >= 0,
  };
}

export function evalTrend(csvText: string): TrendReport {
  const rows = parseRecordsCsv(csvText);
  const algos = [...new Set(rows.map((r) => r.algo))];
  const trends = algos.map((a) => algoTrend(a, rows.filter((r) => r.algo === a)));
  const divergences: string[] = [];
  for (const t of trends) {
    if (!t.risingTrend) {
      divergences.push(
        `${t.algo}: success rate does not rise with repetitions ` +
          `(first ${t.rounds[0].rate.toFixed(4)}, last ${t.rounds.at(-1)!.rate.toFixed(4)})`,
      );
    }
  }
  let comparison: TrendReport["comparison"] = null;
  if (algos.includes("dct") && algos.includes("dwt")) {
    const dctHosts = new Set(rows.filter((r) => r.algo === "dct" && !r.errored).map((r) => r.hostId));
    const shared = new Set(
      rows
        .filter((r) => r.algo === "dwt" && !r.errored && dctHosts.has(r.hostId))
        .map((r) => r.hostId),
    );
    const dwtTotal = totalRate(rows.filter((r) => r.algo === "dwt"), shared);
    const dctTotal = totalRate(rows.filter((r) => r.algo === "dct"), shared);
    comparison = { sharedHosts: shared.size, dwtTotal, dctTotal, dwtAtLeastDct: dwtTotal >= dctTotal };
    if (shared.size && dwtTotal < dctTotal) {
      divergences.push(
        `dwt total ${dwtTotal.toFixed(4)} below dct total ${dctTotal.toFixed(4)} ` +
          `on ${shared.size} shared hosts`,
      );
    }
  }
  return { algos: trends, comparison, divergences };
}

export function formatTrendReport(report: TrendReport): string {
  const lines: string[] = [];
  for (const t of report.algos) {
    const curve = t.rounds.map((r) => `t${r.t}=${r.rate.toFixed(4)}`).join(" ");
    lines.push(
      `[${t.algo}] hosts=${t.hosts} errors=${t.errors} total=${t.total.toFixed(4)} ` +
        `rising=${t.risingTrend} dips=${t.dips.length}`,
    );
    lines.push(`[${t.algo}] per-round: ${curve}`);
  }
  if (report.comparison) {
    const c = report.comparison;
    lines.push(
      `[compare] shared_hosts=${c.sharedHosts} dwt_total=${c.dwtTotal.toFixed(4)} ` +
        `dct_total=${c.dctTotal.toFixed(4)} dwt>=dct=${c.dwtAtLeastDct}`,
    );
  }
  if (report.divergences.length) {
    for (const d of report.divergences) lines.push(`[divergence] ${d}`);
  } else {
    lines.push("[trend] no divergences");
  }
  return lines.join("\n");
}
