import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";

import type { UiEvent } from "../src/types.js";

export function loadTranscript(name: string): UiEvent[] {
  const path = fileURLToPath(
    new URL(`./fixtures/${name}.events.jsonl`, import.meta.url),
  );
  return readFileSync(path, "utf-8")
    .split("\n")
    .filter((line) => line.trim() !== "")
    .map((line) => JSON.parse(line) as UiEvent);
}
