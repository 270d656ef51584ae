/* tslint:disable */
/* eslint-disable */

export class PruneView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Per token: 0 pruned, 1 kept by the region stage, 2 by the window stage.
     */
    mask(): Uint8Array;
    /**
     * `key=value` lines, config first.
     */
    summary(): string;
}

/**
 * Gray levels 0..=255 for drawing a heatmap.
 */
export function heatmap_levels(scores: Float64Array): Uint8Array;

export function prune_mask(scores: Float64Array, regions: number, topk: number, window: number): PruneView;

/**
 * Fits the cost model to `csv` and predicts `before -> after` ratios.
 */
export function speedup(csv: string, before: number, after: number): string;

/**
 * Importance scores of a seeded synthetic image, row-major `grid * grid`.
 */
export function synth_scores(seed: number, grid: number, planted: boolean, noise: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_pruneview_free: (a: number, b: number) => void;
    readonly heatmap_levels: (a: number, b: number) => [number, number];
    readonly prune_mask: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly pruneview_mask: (a: number) => [number, number];
    readonly pruneview_summary: (a: number) => [number, number];
    readonly speedup: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly synth_scores: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
