// Hotspot tooltip: probability to one decimal, declared vs perceived state,
// and a plain-language verdict. Dismisses on any click outside it.

import type { ElementResult } from "./api";

export function formatProbability(probability: number): string {
  return `${(probability * 100).toFixed(1)}%`;
}

export function verdictCopy(el: ElementResult): string {
  if (!el.mismatch) {
    return "perception matches the declared state";
  }
  if (el.clickable && !el.perceived_tappable) {
    return "users may miss this control";
  }
  return "users may tap this and nothing will happen";
}

export interface TooltipContent {
  title: string;
  lines: string[];
}

export function tooltipContent(el: ElementResult): TooltipContent {
  return {
    title: el.element_id,
    lines: [
      `perceived tappable: ${formatProbability(el.probability)}`,
      `declared clickable: ${el.clickable ? "yes" : "no"}`,
      `perceived as: ${el.perceived_tappable ? "tappable" : "not tappable"}`,
      verdictCopy(el),
    ],
  };
}

export class Tooltip {
  private node: HTMLDivElement;
  private onOutsideClick = (event: MouseEvent) => {
    if (!this.node.contains(event.target as Node)) this.dismiss();
  };

  constructor(private readonly root: HTMLElement) {
    this.node = document.createElement("div");
    this.node.className = "tooltip";
    this.node.style.display = "none";
    this.root.appendChild(this.node);
  }

  show(el: ElementResult, x: number, y: number): void {
    const content = tooltipContent(el);
    this.node.replaceChildren();
    const title = document.createElement("strong");
    title.textContent = content.title;
    this.node.appendChild(title);
    for (const line of content.lines) {
      const p = document.createElement("div");
      p.textContent = line;
      this.node.appendChild(p);
    }
    this.node.style.left = `${x + 12}px`;
    this.node.style.top = `${y + 12}px`;
    this.node.style.display = "block";
    // defer so the click that opened the tooltip does not dismiss it
    setTimeout(() => document.addEventListener("click", this.onOutsideClick), 0);
  }

  dismiss(): void {
    this.node.style.display = "none";
    document.removeEventListener("click", this.onOutsideClick);
  }

  get visible(): boolean {
    return this.node.style.display !== "none";
  }

  get element(): HTMLDivElement {
    return this.node;
  }
}
