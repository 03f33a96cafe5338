/** DOM wiring for the demo page; all inference logic lives in session.ts. */

import { DemoSession, Manifest } from "./session.js";

const DEBOUNCE_MS = 200;   // at most ~5 inferences per second

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

async function sha256Hex(buffer: ArrayBuffer): Promise<string> {
  const digest = await crypto.subtle.digest("SHA-256", buffer);
  return Array.from(new Uint8Array(digest)).map(b => b.toString(16).padStart(2, "0")).join("");
}

function renderOutput(container: HTMLElement, text: string, changed: number[]) {
  container.textContent = "";
  const changedSet = new Set(changed);
  Array.from(text).forEach((ch, i) => {
    const span = document.createElement("span");
    span.textContent = ch;
    if (changedSet.has(i)) span.className = "changed";
    container.appendChild(span);
  });
}

async function start() {
  const session = new DemoSession();
  const input = byId<HTMLTextAreaElement>("input");
  const output = byId<HTMLDivElement>("output");
  const banner = byId<HTMLDivElement>("banner");
  const info = byId<HTMLDivElement>("info");
  const select = byId<HTMLSelectElement>("language");

  const manifest: Manifest = await (await fetch("models/manifest.json")).json();
  for (const entry of manifest.languages) {
    const option = document.createElement("option");
    option.value = entry.code;
    option.textContent = entry.name;
    select.appendChild(option);
  }

  async function fetchModel(code: string): Promise<ArrayBuffer> {
    const entry = manifest.languages.find(e => e.code === code);
    if (!entry) throw new Error(`unknown language ${code}`);
    const response = await fetch(`models/${entry.file}`);
    if (!response.ok) throw new Error(`${response.status} ${response.statusText}`);
    return response.arrayBuffer();
  }

  async function load(code: string) {
    banner.hidden = true;
    info.textContent = "loading model...";
    const state = await session.loadLanguage(code, fetchModel);
    if (state === "error") {
      banner.textContent = session.errorMessage;
      banner.hidden = false;
      info.textContent = "";
      return;
    }
    const bytes = session.modelBuffer!.byteLength;
    const hash = await sha256Hex(session.modelBuffer!);
    info.textContent =
      `model: ${(bytes / 1e6).toFixed(2)} MB | sha256 ${hash.slice(0, 16)}... | ` +
      `capacity ${session.currentCapacity}`;
    refresh();
  }

  let timer: number | undefined;
  function refresh() {
    window.clearTimeout(timer);
    timer = window.setTimeout(async () => {
      if (session.state !== "ready") return;
      try {
        const result = await session.restoreLive(input.value);
        renderOutput(output, result.outputText, result.changedPositions);
        info.textContent = info.textContent.replace(/capacity \d+/,
                                                    `capacity ${session.currentCapacity}`);
      } catch (err) {
        banner.textContent = `restoration failed: ${err}`;
        banner.hidden = false;
      }
    }, DEBOUNCE_MS);
  }

  input.addEventListener("input", refresh);
  select.addEventListener("change", () => load(select.value));

  const params = new URLSearchParams(window.location.search);
  const initial = params.get("lang") ?? manifest.languages[0]?.code;
  if (initial) {
    select.value = initial;
    await load(initial);
  }
}

start().catch(err => {
  const banner = document.getElementById("banner");
  if (banner) {
    banner.textContent = `demo failed to start: ${err}`;
    banner.hidden = false;
  }
});
