/* tslint:disable */
/* eslint-disable */

/**
 * Critical coupling `λ_c` for the given frequencies and loss.
 */
export function dicke_critical_coupling(omega0: number, omega: number, kappa: number): number;

/**
 * Gaussian Dicke scan over `λ/λ_c ∈ [lo, hi]`.
 *
 * Layout: 7 values per point, `[λ/λ_c, S, Π_u, Π_d, Φ_q, β, ⟨δa†δa⟩]`.
 */
export function dicke_scan(omega0: number, omega: number, kappa: number, gamma: number, lo: number, hi: number, count: number): Float64Array;

/**
 * Husimi function of the Kerr steady state on a square grid.
 *
 * Layout: `[center_re, center_im, half_width, points_per_axis, S, Π_u, Π_d, Φ_q]`
 * followed by `Q` in row-major order (imaginary axis outer).
 */
export function kerr_husimi(detuning: number, nonlinearity: number, kappa: number, eps: number, size: number, points_per_axis: number): Float64Array;

/**
 * Mean-field photon number per size against drive.
 *
 * Layout: `[ε₋, ε₊, n₋, n₊]` (NaN without bistability) followed by
 * `(ε, n)` pairs for every real root of the mean-field cubic.
 */
export function kerr_mean_field(detuning: number, nonlinearity: number, kappa: number, eps_max: number, count: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly dicke_critical_coupling: (a: number, b: number, c: number) => number;
    readonly dicke_scan: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly kerr_husimi: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly kerr_mean_field: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
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
