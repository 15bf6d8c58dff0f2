// @vitest-environment happy-dom
import { describe, expect, it } from "vitest";

import { renderCards, renderClassList } from "../src/gallery.js";
import { pushHistory } from "../src/history.js";

const results = [
  { id: "i2", label: "river", distance: 0.5, thumbnail_url: "/item/i2/thumb" },
  { id: "i0", label: "runway", distance: 0.9 },
  { id: "i7", label: "river", distance: 1.4 },
];

describe("renderCards", () => {
  it("renders cards strictly in response order, never re-sorting", () => {
    const container = document.createElement("div");
    renderCards(container, results);
    const ids = [...container.children].map((c) => (c as HTMLElement).dataset.id);
    expect(ids).toEqual(["i2", "i0", "i7"]);
    const ranks = [...container.querySelectorAll(".rank")].map((r) => r.textContent);
    expect(ranks).toEqual(["#1", "#2", "#3"]);
  });

  it("replaces previous results on re-render", () => {
    const container = document.createElement("div");
    renderCards(container, results);
    renderCards(container, results.slice(0, 1));
    expect(container.children).toHaveLength(1);
  });

  it("adds thumbnails only when the server provided one", () => {
    const container = document.createElement("div");
    renderCards(container, results);
    expect(container.children[0].querySelector("img")?.src).toContain("/item/i2/thumb");
    expect(container.children[1].querySelector("img")).toBeNull();
  });
});

describe("renderClassList", () => {
  it("badges unseen classes", () => {
    const container = document.createElement("div");
    renderClassList(container, [
      { name: "harbor", seen: true },
      { name: "river", seen: false },
    ]);
    const badges = [...container.children] as HTMLElement[];
    expect(badges[0].className).toBe("class-badge seen");
    expect(badges[1].className).toBe("class-badge unseen");
    expect(badges[1].textContent).toBe("river (unseen)");
  });
});

describe("pushHistory", () => {
  it("keeps the newest five entries, newest first", () => {
    let history: ReturnType<typeof pushHistory> = [];
    for (let i = 0; i < 7; i++) {
      history = pushHistory(history, {
        thumbnail: `data:${i}`,
        k: 10,
        targetModality: "image",
      });
    }
    expect(history).toHaveLength(5);
    expect(history[0].thumbnail).toBe("data:6");
    expect(history[4].thumbnail).toBe("data:2");
  });
});
