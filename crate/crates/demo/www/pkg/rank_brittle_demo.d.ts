/* tslint:disable */
/* eslint-disable */

/**
 * Mean instability of Gaussian queries against a Gaussian corpus when the
 * query embeddings receive additive noise of each listed standard deviation.
 */
export function noise_sweep(sigmas: string, queries: number, corpus: number, dim: number, depth: number, p: number, seed: number): string;

/**
 * Applies every built-in type that needs no POS tags to `text`, with
 * per-type seeds derived from `suite_seed` exactly as suite generation does.
 */
export function perturb_all(text: string, suite_seed: number): string;

/**
 * RBO of two comma- or space-separated id lists, truncated to the shorter
 * list, plus the per-depth curves the page plots.
 */
export function rbo_explore(list_a: string, list_b: string, p: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly noise_sweep: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number];
    readonly perturb_all: (a: number, b: number, c: number) => [number, number];
    readonly rbo_explore: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
