// Render-agnostic scene model. applySnapshot() turns a payload into flat
// object descriptors; the three.js layer maps each descriptor to exactly
// one scene object, so rendered counts always equal payload counts and a
// count assertion on this model covers the scene graph too.

import type { Color, RasterPayload, Snapshot, Vec3 } from "./types.js";

export interface SphereObject {
    kind: "sphere";
    label: number;
    name: string;
    center: Vec3;
    radius: number;
    color: Color;
    highlighted: boolean;
    group: string;
}

export interface LineObject {
    kind: "line";
    points: Vec3[];
    weight: number;
    colorStops: Color[];
}

export interface ChartObject {
    kind: "chart";
    voxelId: number;
    anchor: Vec3;
    // chart polyline in scene units, anchored at the voxel position
    points: Vec3[];
    color: Color;
}

export interface RasterCellObject {
    kind: "cell";
    row: number;
    col: number;
    value: number;
    center: [number, number];
    size: number;
}

export interface SceneObjects {
    spheres: SphereObject[];
    lines: LineObject[];
    charts: ChartObject[];
    rasterCells: RasterCellObject[];
}

export interface PlaybackState {
    playing: boolean;
    speed: number; // time steps per second
    fraction: number; // accumulated sub-step remainder
}

const CHART_WIDTH = 6.0;
const CHART_HEIGHT = 3.0;

/** Static mini line chart: the series drawn in a small frame at the voxel. */
export function buildChartPolyline(anchor: Vec3, series: number[]): Vec3[] {
    const n = series.length;
    if (n === 0) {
        return [];
    }
    let lo = series[0];
    let hi = series[0];
    for (const v of series) {
        if (v < lo) lo = v;
        if (v > hi) hi = v;
    }
    const span = hi - lo || 1.0;
    const points: Vec3[] = [];
    for (let i = 0; i < n; i++) {
        const x = anchor[0] + (n === 1 ? 0 : (i / (n - 1) - 0.5) * CHART_WIDTH);
        const y = anchor[1] + ((series[i] - lo) / span - 0.5) * CHART_HEIGHT;
        points.push([x, y, anchor[2]]);
    }
    return points;
}

export function buildRasterCells(raster: RasterPayload): RasterCellObject[] {
    const cells: RasterCellObject[] = [];
    raster.rows.forEach((row, i) => {
        row.forEach((value, j) => {
            if (value === null) {
                return;
            }
            cells.push({
                kind: "cell",
                row: i,
                col: j,
                value,
                center: [
                    raster.origin_mm[0] + (j + 0.5) * raster.cell_mm,
                    raster.origin_mm[1] + (i + 0.5) * raster.cell_mm,
                ],
                size: raster.cell_mm,
            });
        });
    });
    return cells;
}

function checkSnapshot(snap: Snapshot): void {
    if (!Array.isArray(snap.spheres) || !Array.isArray(snap.polylines)
        || !Array.isArray(snap.charts) || typeof snap.n_timepoints !== "number") {
        throw new Error("malformed snapshot payload");
    }
}

export class ViewModel {
    snapshot: Snapshot | null = null;
    objects: SceneObjects = { spheres: [], lines: [], charts: [], rasterCells: [] };
    playback: PlaybackState = { playing: false, speed: 2.0, fraction: 0 };
    errorBanner: string | null = null;

    /** Apply a payload; on malformed input the banner is set and the scene
     *  keeps its previous contents. */
    applySnapshot(snap: Snapshot): void {
        try {
            checkSnapshot(snap);
        } catch (err) {
            this.errorBanner = (err as Error).message;
            return;
        }
        this.errorBanner = null;
        this.snapshot = snap;
        this.objects = {
            spheres: snap.spheres.map((s) => ({
                kind: "sphere" as const,
                label: s.label,
                name: s.name,
                center: s.center_mm,
                radius: s.radius,
                color: s.color,
                highlighted: s.highlighted,
                group: s.group,
            })),
            lines: snap.polylines.map((p) => ({
                kind: "line" as const,
                points: p.points,
                weight: p.weight,
                colorStops: p.color_stops,
            })),
            charts: snap.charts.map((c) => ({
                kind: "chart" as const,
                voxelId: c.voxel_id,
                anchor: c.anchor_mm,
                points: buildChartPolyline(c.anchor_mm, c.series),
                color: c.mean_color,
            })),
            rasterCells: snap.raster ? buildRasterCells(snap.raster) : [],
        };
    }

    get timeIndex(): number {
        return this.snapshot?.time_index ?? 0;
    }

    get nTimepoints(): number {
        return this.snapshot?.n_timepoints ?? 1;
    }

    /** Clamp a slider value into the valid time range. */
    scrub(t: number): number {
        const max = this.nTimepoints - 1;
        return Math.min(max, Math.max(0, Math.round(t)));
    }

    play(speed?: number): void {
        if (speed !== undefined) {
            this.playback.speed = speed;
        }
        this.playback.playing = true;
    }

    pause(): void {
        this.playback.playing = false;
        this.playback.fraction = 0;
    }

    /** Advance playback by dt seconds; returns the next time index to
     *  request (wrapping at the end), or null when nothing should change. */
    tick(dt: number): number | null {
        if (!this.playback.playing || this.snapshot === null) {
            return null;
        }
        this.playback.fraction += dt * this.playback.speed;
        if (this.playback.fraction < 1.0) {
            return null;
        }
        const steps = Math.floor(this.playback.fraction);
        this.playback.fraction -= steps;
        return (this.timeIndex + steps) % this.nTimepoints;
    }
}
