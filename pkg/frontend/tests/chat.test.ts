import { afterEach, describe, expect, test, vi } from "vitest";

import { ApiClient, ChatResponse } from "../src/api";
import { ChatView } from "../src/chat";

function answerPayload(question: string): ChatResponse {
  return {
    session_id: "t",
    question,
    category: "TimeQuery",
    answer: "You spent 57 minutes sleeping yesterday.",
    short: "57 minutes",
    decomposition: {
      source: "rules",
      category: "TimeQuery",
      marked: "<<CalculateDuration>> ((sleeping)) [[yesterday]]",
      specs: [],
    },
    contexts: ["You spent 57 minutes sleeping yesterday."],
    trace: [
      "category: TimeQuery",
      "decomposed via rules: <<CalculateDuration>> ((sleeping)) [[yesterday]]",
    ],
    latency_ms: 1.0,
    error: null,
    now: 1443625200,
  };
}

function jsonResponse(status: number, body: unknown): Response {
  return {
    ok: status >= 200 && status < 300,
    status,
    statusText: String(status),
    json: async () => body,
  } as unknown as Response;
}

interface Deferred {
  resolve: (r: Response) => void;
  reject: (e: unknown) => void;
}

/** Stub global fetch with a queue of hand-resolved responses so tests can
 * observe the DOM while a request is still in flight. */
function stubFetch(): Deferred[] {
  const pending: Deferred[] = [];
  vi.stubGlobal(
    "fetch",
    vi.fn(
      () =>
        new Promise<Response>((resolve, reject) => {
          pending.push({ resolve, reject });
        }),
    ),
  );
  return pending;
}

function mount(): { root: HTMLElement; view: ChatView } {
  document.body.innerHTML = "";
  const root = document.createElement("div");
  document.body.appendChild(root);
  const view = new ChatView(root, new ApiClient("http://svc"), {
    sessionId: "t",
  });
  return { root, view };
}

function typeAndSend(root: HTMLElement, text: string): void {
  const input = root.querySelector("input") as HTMLInputElement;
  const form = root.querySelector("form") as HTMLFormElement;
  input.value = text;
  input.dispatchEvent(new Event("input"));
  form.dispatchEvent(new Event("submit", { cancelable: true }));
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("ChatView", () => {
  test("send button is disabled until there is text", () => {
    stubFetch();
    const { root } = mount();
    const input = root.querySelector("input") as HTMLInputElement;
    const button = root.querySelector("button") as HTMLButtonElement;
    expect(button.disabled).toBe(true);
    input.value = "  ";
    input.dispatchEvent(new Event("input"));
    expect(button.disabled).toBe(true);
    input.value = "did i sleep";
    input.dispatchEvent(new Event("input"));
    expect(button.disabled).toBe(false);
  });

  test("optimistic user bubble appears before the reply lands", () => {
    const pending = stubFetch();
    const { root } = mount();
    typeAndSend(root, "How long did I sleep yesterday?");
    const bubbles = root.querySelectorAll(".bubble");
    expect(bubbles).toHaveLength(2);
    expect(bubbles[0].className).toContain("user");
    expect(bubbles[0].textContent).toBe("How long did I sleep yesterday?");
    expect(bubbles[1].className).toContain("pending");
    expect(pending).toHaveLength(1);
  });

  test("a second send is blocked while one is in flight", () => {
    const pending = stubFetch();
    const { root } = mount();
    typeAndSend(root, "first question");
    const button = root.querySelector("button") as HTMLButtonElement;
    expect(button.disabled).toBe(true);
    typeAndSend(root, "second question");
    expect(pending).toHaveLength(1);
    expect(root.querySelectorAll(".bubble.user")).toHaveLength(1);
  });

  test("reply fills the answer bubble with an expandable trace", async () => {
    const pending = stubFetch();
    const { root } = mount();
    typeAndSend(root, "How long did I sleep yesterday?");
    pending[0].resolve(
      jsonResponse(200, answerPayload("How long did I sleep yesterday?")),
    );
    await vi.waitFor(() => {
      expect(root.querySelector(".bubble.system .answer")).not.toBeNull();
    });
    const bubble = root.querySelector(".bubble.system") as HTMLElement;
    expect(bubble.querySelector(".answer")!.textContent).toBe(
      "You spent 57 minutes sleeping yesterday.",
    );
    const trace = bubble.querySelector("details.trace") as HTMLDetailsElement;
    expect(trace).not.toBeNull();
    expect(trace.open).toBe(false);
    expect(trace.querySelectorAll("li").length).toBeGreaterThan(0);
    expect(trace.querySelector(".marked")!.textContent).toContain(
      "<<CalculateDuration>>",
    );
    const button = root.querySelector("button") as HTMLButtonElement;
    expect(button.disabled).toBe(true); // input is empty again
  });

  test("messages stay in arrival order across sends", async () => {
    const pending = stubFetch();
    const { root } = mount();
    typeAndSend(root, "one");
    pending[0].resolve(jsonResponse(200, answerPayload("one")));
    await vi.waitFor(() =>
      expect(root.querySelectorAll(".answer")).toHaveLength(1),
    );
    typeAndSend(root, "two");
    pending[1].resolve(jsonResponse(200, answerPayload("two")));
    await vi.waitFor(() =>
      expect(root.querySelectorAll(".answer")).toHaveLength(2),
    );
    const roles = [...root.querySelectorAll(".bubble")].map((b) =>
      b.classList.contains("user") ? "user" : "system",
    );
    expect(roles).toEqual(["user", "system", "user", "system"]);
  });

  test("422 turns the pending bubble into an inline notice", async () => {
    const pending = stubFetch();
    const { root } = mount();
    typeAndSend(root, "gibberish zzz");
    pending[0].resolve(jsonResponse(422, { detail: "cannot decompose" }));
    await vi.waitFor(() => {
      expect(root.querySelector(".bubble.notice")).not.toBeNull();
    });
    const notice = root.querySelector(".bubble.notice") as HTMLElement;
    expect(notice.textContent).toContain("cannot decompose");
    expect(root.querySelector(".toast")).toBeNull();
  });

  test("network failure shows a retry toast and retry resends", async () => {
    const pending = stubFetch();
    const { root } = mount();
    typeAndSend(root, "How long did I sleep yesterday?");
    pending[0].reject(new TypeError("fetch failed"));
    await vi.waitFor(() => {
      expect(root.querySelector(".toast")).not.toBeNull();
    });
    expect(root.querySelector(".bubble.pending")).toBeNull();
    expect(root.querySelectorAll(".bubble.user")).toHaveLength(1);

    const retry = [...root.querySelectorAll(".toast button")].find(
      (b) => b.textContent === "Retry",
    ) as HTMLButtonElement;
    retry.click();
    expect(root.querySelector(".toast")).toBeNull();
    expect(pending).toHaveLength(2);
    pending[1].resolve(
      jsonResponse(200, answerPayload("How long did I sleep yesterday?")),
    );
    await vi.waitFor(() => {
      expect(root.querySelector(".answer")).not.toBeNull();
    });
    expect(root.querySelectorAll(".bubble.user")).toHaveLength(2);
  });
});
