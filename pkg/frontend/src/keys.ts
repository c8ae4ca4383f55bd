/** Keyboard-first controls: key -> operator intent.
 *
 * Enter saves, S skips, digits pick the active class, D deletes the
 * highlighted box, Q ends the session; Tab cycles the highlight locally.
 */

export type Intent =
  | { kind: "save" }
  | { kind: "skip" }
  | { kind: "set_class"; classId: number }
  | { kind: "delete_box" }
  | { kind: "quit" }
  | { kind: "cycle_highlight" };

export function intentForKey(key: string): Intent | null {
  if (key === "Enter") return { kind: "save" };
  if (key === "s" || key === "S") return { kind: "skip" };
  if (key === "d" || key === "D") return { kind: "delete_box" };
  if (key === "q" || key === "Q") return { kind: "quit" };
  if (key === "Tab") return { kind: "cycle_highlight" };
  if (/^[0-9]$/.test(key)) return { kind: "set_class", classId: Number(key) };
  return null;
}
