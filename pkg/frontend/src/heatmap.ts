// Heatmap document parsing and the class legend. One color per class;
// cell opacity follows majority confidence; null cells are NoData.

export interface HeatmapDoc {
  origin: { lat: number; lon: number };
  cell_size_m: number;
  width: number;
  height: number;
  rows: [string | null, number][][];
  out_of_grid: number;
}

export const CLASS_COLORS: Record<string, string> = {
  soil: "#a57f52",
  crop: "#2f9e44",
  grass: "#94d82d",
  broadleaf_weed: "#e03131",
};

export const CLASS_ORDER = ["soil", "crop", "grass", "broadleaf_weed"];

export interface HeatCell {
  row: number;
  col: number;
  label: string;
  confidence: number;
  color: string;
}

export function legendEntries(): { label: string; color: string }[] {
  return CLASS_ORDER.map((label) => ({ label, color: CLASS_COLORS[label] }));
}

export function parseHeatmap(doc: HeatmapDoc): HeatCell[] {
  const cells: HeatCell[] = [];
  for (let row = 0; row < doc.rows.length; row++) {
    const line = doc.rows[row];
    for (let col = 0; col < line.length; col++) {
      const [label, confidence] = line[col];
      if (label === null) continue;
      const color = CLASS_COLORS[label];
      if (!color) throw new Error(`unknown class label ${label}`);
      cells.push({ row, col, label, confidence, color });
    }
  }
  return cells;
}

export function dataCellCount(doc: HeatmapDoc): number {
  return parseHeatmap(doc).length;
}
