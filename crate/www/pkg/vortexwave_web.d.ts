/* tslint:disable */
/* eslint-disable */

/**
 * `[c2s, U, omega]` for a pair of half distance `d` and a polygon of `k + 1`
 * vortices on radius `rho`, all with strength `kappa`.
 */
export function constants(s: number, kappa: number, d: number, rho: number, k: number): Float64Array;

/**
 * Trajectories of a rotating polygon (`kind = 0`, `k + 1` vortices on the
 * unit circle) or a traveling pair (`kind = 1`, half distance 1). Layout per
 * sample: `[t, x0, y0, x1, y1, ...]`.
 */
export function orbit(s: number, kind: number, k: number, t_end: number, dt: number, sample_every: number): Float64Array;

/**
 * Ground-state profile sampled on `samples` points of `[0, r_plot]`, in
 * units of the free-boundary radius. Layout: `[M_gamma, R1, r0, W0, r1, W1, ...]`.
 */
export function profile_curve(s: number, gamma: number, n_inner: number, r_plot: number, samples: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly constants: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly orbit: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly profile_curve: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
