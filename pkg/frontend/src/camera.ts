// Camera state machine: orbit mode for the overview (rotate/zoom around a
// target) and fly mode for inside-the-brain navigation (WASD + pointer).
// Pure math here; the three.js layer only copies pose.position/quaternion.

import type { Vec3 } from "./types.js";

export interface Pose {
    position: Vec3;
    target: Vec3;
}

export type CameraMode = "orbit" | "fly";

export interface OrbitState {
    theta: number; // azimuth, radians
    phi: number; // polar angle from +z, radians
    radius: number;
    target: Vec3;
}

export interface FlyState {
    position: Vec3;
    yaw: number;
    pitch: number;
    speed: number; // scene units per second
}

export interface FlyInput {
    forward: number; // -1..1
    strafe: number; // -1..1
    lift: number; // -1..1
    yawDelta: number;
    pitchDelta: number;
}

const EPS = 1e-4;

export function defaultOrbit(sceneRadius: number): OrbitState {
    return { theta: Math.PI / 4, phi: Math.PI / 3, radius: sceneRadius * 2.5, target: [0, 0, 0] };
}

export function orbitPose(state: OrbitState): Pose {
    const sp = Math.sin(state.phi);
    return {
        position: [
            state.target[0] + state.radius * sp * Math.cos(state.theta),
            state.target[1] + state.radius * sp * Math.sin(state.theta),
            state.target[2] + state.radius * Math.cos(state.phi),
        ],
        target: state.target,
    };
}

export function orbitRotate(state: OrbitState, dTheta: number, dPhi: number): OrbitState {
    const phi = Math.min(Math.PI - EPS, Math.max(EPS, state.phi + dPhi));
    return { ...state, theta: state.theta + dTheta, phi };
}

export function orbitZoom(state: OrbitState, factor: number): OrbitState {
    return { ...state, radius: Math.max(EPS, state.radius * factor) };
}

export function flyDirections(state: FlyState): { forward: Vec3; right: Vec3; up: Vec3 } {
    const cp = Math.cos(state.pitch);
    const forward: Vec3 = [
        cp * Math.cos(state.yaw),
        cp * Math.sin(state.yaw),
        Math.sin(state.pitch),
    ];
    const right: Vec3 = [Math.sin(state.yaw), -Math.cos(state.yaw), 0];
    return { forward, right, up: [0, 0, 1] };
}

export function flyUpdate(state: FlyState, input: FlyInput, dt: number): FlyState {
    const yaw = state.yaw + input.yawDelta;
    const pitch = Math.min(Math.PI / 2 - EPS, Math.max(-Math.PI / 2 + EPS, state.pitch + input.pitchDelta));
    const moved = { ...state, yaw, pitch };
    const { forward, right, up } = flyDirections(moved);
    const d = state.speed * dt;
    const position: Vec3 = [
        state.position[0] + d * (forward[0] * input.forward + right[0] * input.strafe + up[0] * input.lift),
        state.position[1] + d * (forward[1] * input.forward + right[1] * input.strafe + up[1] * input.lift),
        state.position[2] + d * (forward[2] * input.forward + right[2] * input.strafe + up[2] * input.lift),
    ];
    return { ...moved, position };
}

export function flyPose(state: FlyState): Pose {
    const { forward } = flyDirections(state);
    return {
        position: state.position,
        target: [
            state.position[0] + forward[0],
            state.position[1] + forward[1],
            state.position[2] + forward[2],
        ],
    };
}

/** Linear fly-to used by region selection: eases the orbit target onto the
 *  region centroid and tightens the radius around its sphere. */
export function flyToRegion(state: OrbitState, center: Vec3, radius: number): OrbitState {
    return { ...state, target: center, radius: Math.max(radius * 6, EPS) };
}

export function lerpOrbit(a: OrbitState, b: OrbitState, t: number): OrbitState {
    const k = Math.min(1, Math.max(0, t));
    return {
        theta: a.theta + (b.theta - a.theta) * k,
        phi: a.phi + (b.phi - a.phi) * k,
        radius: a.radius + (b.radius - a.radius) * k,
        target: [
            a.target[0] + (b.target[0] - a.target[0]) * k,
            a.target[1] + (b.target[1] - a.target[1]) * k,
            a.target[2] + (b.target[2] - a.target[2]) * k,
        ],
    };
}
