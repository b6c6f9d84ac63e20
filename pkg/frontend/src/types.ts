// Payload shapes of the scene API. The UI is a pure renderer of these:
// it never invents values that are not present in a payload.

export type Color = [number, number, number, number];
export type Vec3 = [number, number, number];

export interface SpherePayload {
    label: number;
    name: string;
    center_mm: Vec3;
    radius: number;
    color: Color;
    highlighted: boolean;
    group: "biological" | "dtb";
}

export interface PolylinePayload {
    points: Vec3[];
    weight: number;
    color_stops: Color[];
}

export interface ChartPayload {
    voxel_id: number;
    anchor_mm: Vec3;
    series: number[];
    mean_color: Color;
}

export interface RasterPayload {
    axis: string;
    coordinate_mm: number;
    thickness_mm: number;
    t: number;
    origin_mm: [number, number];
    cell_mm: number;
    rows: (number | null)[][];
}

export interface Snapshot {
    dataset_id: string;
    session_id: string;
    time_index: number;
    threshold_tau: number;
    compare_mode: boolean;
    color_range_mode: string;
    dt_ms: number;
    n_timepoints: number;
    spheres: SpherePayload[];
    polylines: PolylinePayload[];
    charts: ChartPayload[];
    raster: RasterPayload | null;
}

export interface SessionState {
    session_id: string;
    dataset_id: string;
    time_index: number;
    threshold_tau: number;
    selected_regions: number[];
    visited_regions: number[];
    compare_mode: boolean;
    color_range_mode: string;
    slice: { axis: string; coordinate_mm: number; thickness_mm: number | null } | null;
}

export interface DatasetInfo {
    id: string;
    species: string;
    n_regions: number;
    n_functional_regions: number;
    n_voxels: number;
    n_timepoints: number;
    dt_ms: number;
    n_connections: number;
    has_dtb: boolean;
    has_bundles: boolean;
}

export interface Neighbor {
    label: number;
    weight: number;
}

export interface ApiError {
    code: string;
    message: string;
}
