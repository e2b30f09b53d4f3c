/** Page bootstrap: wires the workbench to the toolbar and panels. */

import { Workbench } from "./workbench.js";
import { HeatmapPanel } from "./heatmap.js";
import { StripPanel } from "./strips.js";
import { Toasts } from "./toast.js";
import { I_MIN_MAX, I_MIN_MIN, I_MIN_STEP } from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function main(): void {
  const base = new URLSearchParams(location.search).get("api") ?? "";
  const bench = new Workbench(base, { trees: 200 });
  const toasts = new Toasts(el("toasts"));

  const heatCanvas = el<HTMLCanvasElement>("heatmap");
  const stripCanvas = el<HTMLCanvasElement>("strips");
  const status = el("status");
  const strips = new StripPanel(stripCanvas, el("strip-labels"), bench, toasts);
  const heat = new HeatmapPanel(
    heatCanvas,
    bench,
    toasts,
    () => void strips.sync(),
    (text) => (status.textContent = text),
  );

  const slider = el<HTMLInputElement>("imin");
  slider.min = String(I_MIN_MIN);
  slider.max = String(I_MIN_MAX);
  slider.step = String(I_MIN_STEP);
  slider.value = String(bench.state.iMin);
  const sliderValue = el("imin-value");
  sliderValue.textContent = slider.value;
  slider.addEventListener("input", () => {
    bench.setIMin(Number(slider.value));
    sliderValue.textContent = bench.state.iMin.toFixed(2);
  });

  el<HTMLInputElement>("csv-file").addEventListener("change", async (e) => {
    const input = e.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    try {
      const info = await bench.uploadCsv(await file.text());
      toasts.show(
        `dataset ${info.dataset_id.slice(0, 12)}… (${info.m} rows)`,
        "info",
      );
      await bench.createRoot();
    } catch (err) {
      toasts.error(err);
    }
  });

  const reclusterBtn = el<HTMLButtonElement>("recluster");
  reclusterBtn.addEventListener("click", async () => {
    try {
      await bench.recluster();
    } catch (err) {
      toasts.error(err);
    }
  });

  el<HTMLInputElement>("toggle-types").addEventListener("change", (e) => {
    bench.setTypesVisible((e.target as HTMLInputElement).checked);
    void strips.sync();
  });
  el<HTMLInputElement>("toggle-shared").addEventListener("change", (e) => {
    bench.setSharedCalibration((e.target as HTMLInputElement).checked);
    void strips.sync();
  });

  el("export-log").addEventListener("click", () => {
    const blob = new Blob([bench.exportLog()], { type: "application/json" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "request-log.json";
    a.click();
    URL.revokeObjectURL(a.href);
  });

  const crumbs = el("breadcrumb");
  function renderCrumbs(): void {
    crumbs.textContent = "";
    bench.state.crumbs.forEach((crumb, level) => {
      const node = document.createElement("button");
      node.className =
        level === bench.state.active ? "crumb crumb-active" : "crumb";
      node.textContent = crumb.range
        ? `[${crumb.range[0]}, ${crumb.range[1]})`
        : "root";
      if (crumb.pendingChild) node.textContent += " …";
      node.addEventListener("click", () => {
        void bench.goTo(level).then(() => heat.sync());
      });
      crumbs.appendChild(node);
    });
  }

  bench.onChange(() => {
    renderCrumbs();
    reclusterBtn.disabled = !bench.canRecluster();
    heat.sync();
  });
}

main();
