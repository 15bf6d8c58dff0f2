/**
 * Result gallery DOM builders.
 *
 * Cards are rendered strictly in response order: ranking is the
 * server's job and the UI never re-sorts.
 */

import { ClassInfo, ResultItem } from "./api.js";

export function renderCards(container: HTMLElement, results: ResultItem[]): void {
  container.replaceChildren();
  results.forEach((item, i) => {
    const card = container.ownerDocument.createElement("div");
    card.className = "card";
    card.dataset.id = item.id;
    const rank = container.ownerDocument.createElement("span");
    rank.className = "rank";
    rank.textContent = `#${i + 1}`;
    const label = container.ownerDocument.createElement("span");
    label.className = "label";
    label.textContent = item.label;
    const distance = container.ownerDocument.createElement("span");
    distance.className = "distance";
    distance.textContent = item.distance.toFixed(4);
    card.append(rank);
    if (item.thumbnail_url) {
      const img = container.ownerDocument.createElement("img");
      img.src = item.thumbnail_url;
      img.alt = item.label;
      card.append(img);
    }
    card.append(label, distance);
    container.append(card);
  });
}

export function renderClassList(container: HTMLElement, classes: ClassInfo[]): void {
  container.replaceChildren();
  for (const cls of classes) {
    const badge = container.ownerDocument.createElement("span");
    badge.className = cls.seen ? "class-badge seen" : "class-badge unseen";
    badge.textContent = cls.seen ? cls.name : `${cls.name} (unseen)`;
    container.append(badge);
  }
}
