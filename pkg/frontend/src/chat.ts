// Chat panel: a message list plus an input row. Sending is optimistic (the
// user bubble and a pending system bubble appear before the server replies)
// and the pending bubble is reconciled in place: answer on success, an
// inline notice when the service could not decompose the question (422),
// or removed with a retry toast on anything else. One request in flight at
// a time; the send button stays disabled until the reply lands.

import { ApiClient, ApiError, ChatResponse } from "./api";

export interface ChatOptions {
  sessionId?: string;
  now?: number; // fixed clock forwarded to the service, mainly for demos
  userId?: string;
  onAnswer?: (resp: ChatResponse) => void;
}

export class ChatView {
  private api: ApiClient;
  private opts: ChatOptions;
  private list: HTMLElement;
  private input: HTMLInputElement;
  private button: HTMLButtonElement;
  private toasts: HTMLElement;
  private inFlight = false;

  constructor(root: HTMLElement, api: ApiClient, opts: ChatOptions = {}) {
    this.api = api;
    this.opts = opts;

    this.list = document.createElement("div");
    this.list.className = "chat-list";

    const form = document.createElement("form");
    form.className = "chat-form";
    this.input = document.createElement("input");
    this.input.type = "text";
    this.input.placeholder = "Ask about your day, e.g. how long did I sleep yesterday?";
    this.button = document.createElement("button");
    this.button.type = "submit";
    this.button.textContent = "Send";
    form.appendChild(this.input);
    form.appendChild(this.button);

    this.toasts = document.createElement("div");
    this.toasts.className = "toasts";

    root.appendChild(this.list);
    root.appendChild(form);
    root.appendChild(this.toasts);

    this.input.oninput = () => this.syncButton();
    form.onsubmit = (ev) => {
      ev.preventDefault();
      const text = this.input.value.trim();
      if (text && !this.inFlight) {
        this.input.value = "";
        this.syncButton();
        void this.send(text);
      }
    };
    this.syncButton();
  }

  private syncButton(): void {
    this.button.disabled = this.inFlight || this.input.value.trim() === "";
  }

  private bubble(role: "user" | "system", text: string): HTMLElement {
    const div = document.createElement("div");
    div.className = `bubble ${role}`;
    div.textContent = text;
    this.list.appendChild(div);
    this.list.scrollTop = this.list.scrollHeight;
    return div;
  }

  /** Send one question. Public so a retry toast (and tests) can call it. */
  async send(text: string): Promise<void> {
    if (this.inFlight) return;
    this.inFlight = true;
    this.syncButton();
    this.bubble("user", text);
    const pending = this.bubble("system", "…");
    pending.classList.add("pending");
    try {
      const resp = await this.api.chat(text, this.opts.sessionId ?? "ui", {
        now: this.opts.now,
        userId: this.opts.userId,
      });
      this.fillAnswer(pending, resp);
      this.opts.onAnswer?.(resp);
    } catch (err) {
      if (err instanceof ApiError && err.status === 422) {
        pending.classList.remove("pending");
        pending.classList.add("notice");
        pending.textContent = `Couldn't decompose that question: ${err.detail}`;
      } else {
        pending.remove();
        const detail = err instanceof Error ? err.message : String(err);
        this.toast(`Request failed: ${detail}`, () => void this.send(text));
      }
    } finally {
      this.inFlight = false;
      this.syncButton();
    }
  }

  private fillAnswer(bubble: HTMLElement, resp: ChatResponse): void {
    bubble.classList.remove("pending");
    bubble.textContent = "";

    const answer = document.createElement("div");
    answer.className = "answer";
    answer.textContent = resp.answer;
    bubble.appendChild(answer);

    if (resp.short && resp.short !== resp.answer) {
      const short = document.createElement("div");
      short.className = "short";
      short.textContent = `short: ${resp.short}`;
      bubble.appendChild(short);
    }

    // internals on demand: category, markers and per-function summaries
    const details = document.createElement("details");
    details.className = "trace";
    const summary = document.createElement("summary");
    summary.textContent = `trace (${resp.category})`;
    details.appendChild(summary);
    const marked = document.createElement("code");
    marked.className = "marked";
    marked.textContent = resp.decomposition.marked;
    details.appendChild(marked);
    const ol = document.createElement("ol");
    for (const line of resp.trace) {
      const li = document.createElement("li");
      li.textContent = line;
      ol.appendChild(li);
    }
    details.appendChild(ol);
    bubble.appendChild(details);

    if (resp.error) {
      const note = document.createElement("div");
      note.className = "notice";
      note.textContent = resp.error;
      bubble.appendChild(note);
    }
  }

  private toast(message: string, retry?: () => void): void {
    const div = document.createElement("div");
    div.className = "toast";
    const span = document.createElement("span");
    span.textContent = message;
    div.appendChild(span);
    if (retry) {
      const btn = document.createElement("button");
      btn.type = "button";
      btn.textContent = "Retry";
      btn.onclick = () => {
        div.remove();
        retry();
      };
      div.appendChild(btn);
    }
    const close = document.createElement("button");
    close.type = "button";
    close.className = "toast-close";
    close.textContent = "×";
    close.onclick = () => div.remove();
    div.appendChild(close);
    this.toasts.appendChild(div);
  }
}
