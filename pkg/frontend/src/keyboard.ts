/** Keyboard shortcuts for the labeling session. */

export type KeyAction =
  | { type: "toggle"; label: string }
  | { type: "commit" }
  | { type: "undo" }
  | { type: "view" }
  | null;

/**
 * Maps a key press to a session action. Digits 1-8 toggle the anomaly
 * subclasses in vocabulary order, 0 toggles the trailing catch-all label,
 * Enter commits and advances, Backspace revisits the previous window, and
 * "r" flips between raw and residual views. The vocabulary always comes
 * from the service; nothing here names a label.
 */
export function actionForKey(key: string, vocabulary: readonly string[]): KeyAction {
  if (key === "Enter") return { type: "commit" };
  if (key === "Backspace") return { type: "undo" };
  if (key === "r" || key === "R") return { type: "view" };
  if (/^[1-9]$/.test(key)) {
    const subclasses = vocabulary.slice(0, -1);
    const label = subclasses[Number(key) - 1];
    return label === undefined ? null : { type: "toggle", label };
  }
  if (key === "0") {
    const label = vocabulary[vocabulary.length - 1];
    return label === undefined ? null : { type: "toggle", label };
  }
  return null;
}

/** Shortcut hint for a vocabulary entry, for rendering on its button. */
export function shortcutFor(index: number, vocabularySize: number): string | null {
  if (index === vocabularySize - 1) return "0";
  if (index < 9) return String(index + 1);
  return null;
}
