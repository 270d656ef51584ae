/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_pruneview_free: (a: number, b: number) => void;
export const heatmap_levels: (a: number, b: number) => [number, number];
export const prune_mask: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const pruneview_mask: (a: number) => [number, number];
export const pruneview_summary: (a: number) => [number, number];
export const speedup: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const synth_scores: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
