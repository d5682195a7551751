// Page bootstrap: header with service health, the chat panel and the
// activity timeline panel with its little range form.

import { ApiClient } from "./api";
import { ChatView } from "./chat";
import { buildRows, renderLegend, renderTimeline } from "./timeline";
import "./style.css";

const api = new ApiClient("");

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

function isoDayOf(epochSeconds: number): string {
  return new Date(epochSeconds * 1000).toISOString().slice(0, 10);
}

function install(root: HTMLElement): void {
  const header = el("header");
  header.appendChild(el("h1", "", "loqa"));
  const health = el("span", "health", "connecting…");
  header.appendChild(health);
  root.appendChild(header);

  const chatPanel = el("section", "panel chat-panel");
  chatPanel.appendChild(el("h2", "", "Chat"));
  root.appendChild(chatPanel);

  const tlPanel = el("section", "panel timeline-panel");
  tlPanel.appendChild(el("h2", "", "Activity timeline"));

  const form = el("form", "range-form");
  const date = el("input") as HTMLInputElement;
  date.type = "date";
  date.value = isoDayOf(Math.floor(Date.now() / 1000));
  const days = el("select") as HTMLSelectElement;
  for (let n = 1; n <= 7; n++) {
    const opt = el("option", "", n === 1 ? "1 day" : `${n} days`);
    opt.setAttribute("value", String(n));
    days.appendChild(opt);
  }
  const user = el("input") as HTMLInputElement;
  user.type = "text";
  user.placeholder = "user (optional)";
  const load = el("button", "", "Load") as HTMLButtonElement;
  load.type = "submit";
  form.append(date, days, user, load);
  tlPanel.appendChild(form);

  const legend = el("div", "legend");
  const gantt = el("div", "gantt");
  gantt.appendChild(el("div", "empty-state", "Pick a date and press Load."));
  tlPanel.append(legend, gantt);
  root.appendChild(tlPanel);

  let vocab: string[] = [];
  let dateTouched = false;
  date.onchange = () => {
    dateTouched = true;
  };

  form.onsubmit = (ev) => {
    ev.preventDefault();
    if (!date.value) return;
    const start = Math.floor(Date.parse(date.value) / 1000);
    const end = start + Number(days.value) * 86400;
    load.disabled = true;
    api
      .timeline(start, end, { k: 1, userId: user.value.trim() || undefined })
      .then((resp) => renderTimeline(gantt, buildRows(resp.entries, vocab)))
      .catch((err) => {
        gantt.textContent = "";
        gantt.appendChild(
          el("div", "empty-state", `Timeline request failed: ${err.message}`),
        );
      })
      .finally(() => {
        load.disabled = false;
      });
  };

  new ChatView(chatPanel, api, {
    sessionId: "ui",
    onAnswer: (resp) => {
      // steer the date picker to the service clock until the user sets one
      if (!dateTouched) date.value = isoDayOf(resp.now);
    },
  });

  api
    .health()
    .then((h) => {
      health.textContent = `${h.status} · ${h.windows} windows · ${h.labels} labels`;
    })
    .catch(() => {
      health.textContent = "service unreachable";
      health.classList.add("bad");
    });
  api
    .labels()
    .then((names) => {
      vocab = names;
      renderLegend(legend, vocab);
    })
    .catch(() => {
      // store not loaded yet; legend stays empty
    });
}

install(document.getElementById("app") as HTMLElement);
