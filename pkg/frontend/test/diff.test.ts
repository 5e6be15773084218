import { describe, expect, it } from "vitest";

import { wordDiff } from "../src/diff.js";

describe("wordDiff", () => {
  it("returns one same segment for identical texts", () => {
    expect(wordDiff("the same text", "the same text")).toEqual([
      { kind: "same", text: "the same text" },
    ]);
  });

  it("marks a replaced word in the middle", () => {
    const segments = wordDiff("set on Mars tonight", "set on Venus tonight");
    expect(segments).toEqual([
      { kind: "same", text: "set on " },
      { kind: "removed", text: "Mars" },
      { kind: "added", text: "Venus" },
      { kind: "same", text: " tonight" },
    ]);
  });

  it("handles insertion at the end", () => {
    expect(wordDiff("a b", "a b c")).toEqual([
      { kind: "same", text: "a b" },
      { kind: "added", text: " c" },
    ]);
  });

  it("handles pure deletion and empty sides", () => {
    expect(wordDiff("a b c", "a c")).toEqual([
      { kind: "same", text: "a " },
      { kind: "removed", text: "b " },
      { kind: "same", text: "c" },
    ]);
    expect(wordDiff("", "new text")).toEqual([{ kind: "added", text: "new text" }]);
    expect(wordDiff("old text", "")).toEqual([{ kind: "removed", text: "old text" }]);
  });

  it("reconstructs both sides from the segments", () => {
    const pairs: [string, string][] = [
      ["the dog barks at the player", "the dog growls at the player and the sheep"],
      ["sandstorms sweep nightly", "storms sweep rarely and gently"],
      ["one", "two three four"],
    ];
    for (const [oldText, newText] of pairs) {
      const segments = wordDiff(oldText, newText);
      const left = segments.filter((s) => s.kind !== "added").map((s) => s.text).join("");
      const right = segments.filter((s) => s.kind !== "removed").map((s) => s.text).join("");
      expect(left).toBe(oldText);
      expect(right).toBe(newText);
    }
  });
});
