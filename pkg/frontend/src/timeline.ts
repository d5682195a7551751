// Activity timeline panel: turns /api/timeline entries into per-day Gantt
// rows and renders them as colored segment bars. Building rows is a pure
// function of the fetched payload so a refetch always redraws the same
// picture; nothing here mutates the entries.

import type { TimelineEntry } from "./api";

// ---- Types ----

export interface Segment {
  start: number; // minute of day, inclusive
  end: number; // minute of day, exclusive
  label: string;
  color: string;
}

export interface GanttRow {
  day: string; // UTC date, e.g. "2015-09-21"
  dayIndex: number; // days since epoch, sort key
  userId: string;
  segments: Segment[];
  minutes: number; // number of timeline entries behind this row
}

// ---- Colors ----

// One color per vocabulary index, cycled for larger vocabularies. The
// mapping depends only on the label's position in /api/labels, so the same
// activity keeps its color across rows, days and refetches.
const PALETTE = [
  "#4e79a7",
  "#f28e2b",
  "#e15759",
  "#76b7b2",
  "#59a14f",
  "#edc948",
  "#b07aa1",
  "#ff9da7",
  "#9c755f",
  "#bab0ac",
  "#2f4b7c",
  "#d45087",
];

const UNKNOWN_COLOR = "#888888";

export function colorForLabel(label: string, vocab: string[]): string {
  const idx = vocab.indexOf(label);
  if (idx < 0) return UNKNOWN_COLOR;
  return PALETTE[idx % PALETTE.length];
}

// ---- Row building ----

const DAY_MINUTES = 1440;

function minuteOfDay(ts: number): number {
  return Math.floor((ts % 86400) / 60);
}

function isoDay(dayIndex: number): string {
  return new Date(dayIndex * 86400 * 1000).toISOString().slice(0, 10);
}

/** Group entries into (user, day) rows and merge consecutive minutes that
 * share a top-1 label into segments. Gaps in the data close the current
 * segment, so the sum of segment lengths always equals the number of
 * entries in the row. */
export function buildRows(
  entries: readonly TimelineEntry[],
  vocab: string[],
): GanttRow[] {
  const sorted = [...entries].sort(
    (a, b) => a.user_id.localeCompare(b.user_id) || a.timestamp - b.timestamp,
  );
  const rows: GanttRow[] = [];
  let row: GanttRow | null = null;
  let seg: Segment | null = null;

  for (const entry of sorted) {
    const dayIndex = Math.floor(entry.timestamp / 86400);
    const minute = minuteOfDay(entry.timestamp);
    const label = entry.labels.length ? entry.labels[0].label : "(none)";

    if (!row || row.dayIndex !== dayIndex || row.userId !== entry.user_id) {
      row = {
        day: isoDay(dayIndex),
        dayIndex,
        userId: entry.user_id,
        segments: [],
        minutes: 0,
      };
      rows.push(row);
      seg = null;
    }
    row.minutes += 1;
    if (seg && seg.label === label && seg.end === minute) {
      seg.end = minute + 1;
    } else {
      seg = {
        start: minute,
        end: minute + 1,
        label,
        color: colorForLabel(label, vocab),
      };
      row.segments.push(seg);
    }
  }
  rows.sort(
    (a, b) => a.dayIndex - b.dayIndex || a.userId.localeCompare(b.userId),
  );
  return rows;
}

// ---- Rendering ----

function fmtMinute(m: number): string {
  const h = Math.floor(m / 60);
  const mm = m % 60;
  return `${String(h).padStart(2, "0")}:${String(mm).padStart(2, "0")}`;
}

export function renderTimeline(root: HTMLElement, rows: GanttRow[]): void {
  root.textContent = "";
  if (rows.length === 0) {
    const empty = document.createElement("div");
    empty.className = "empty-state";
    empty.textContent = "No timeline data for this range.";
    root.appendChild(empty);
    return;
  }
  const manyUsers = new Set(rows.map((r) => r.userId)).size > 1;
  for (const row of rows) {
    const div = document.createElement("div");
    div.className = "gantt-row";
    div.dataset.day = row.day;
    div.dataset.minutes = String(row.minutes);

    const name = document.createElement("div");
    name.className = "gantt-day";
    name.textContent = manyUsers ? `${row.day} ${row.userId}` : row.day;
    div.appendChild(name);

    const track = document.createElement("div");
    track.className = "gantt-track";
    for (const seg of row.segments) {
      const bar = document.createElement("div");
      bar.className = "seg";
      bar.dataset.label = seg.label;
      bar.dataset.start = String(seg.start);
      bar.dataset.end = String(seg.end);
      bar.style.left = `${(seg.start / DAY_MINUTES) * 100}%`;
      bar.style.width = `${((seg.end - seg.start) / DAY_MINUTES) * 100}%`;
      bar.style.background = seg.color;
      bar.title = `${seg.label} ${fmtMinute(seg.start)} to ${fmtMinute(seg.end)}`;
      track.appendChild(bar);
    }
    div.appendChild(track);
    root.appendChild(div);
  }
}

export function renderLegend(root: HTMLElement, vocab: string[]): void {
  root.textContent = "";
  for (const label of vocab) {
    const chip = document.createElement("span");
    chip.className = "legend-chip";
    const dot = document.createElement("span");
    dot.className = "legend-dot";
    dot.style.background = colorForLabel(label, vocab);
    chip.appendChild(dot);
    chip.appendChild(document.createTextNode(label));
    root.appendChild(chip);
  }
}
