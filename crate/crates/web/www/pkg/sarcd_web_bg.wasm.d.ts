/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_difference_free: (a: number, b: number) => void;
export const __wbg_scene_free: (a: number, b: number) => void;
export const difference_binary_rgba: (a: number) => [number, number];
export const difference_di_rgba: (a: number) => [number, number];
export const difference_report: (a: number) => [number, number];
export const difference_threshold: (a: number) => number;
export const scene_changed_pixels: (a: number) => number;
export const scene_difference: (a: number, b: number, c: number) => [number, number, number];
export const scene_height: (a: number) => number;
export const scene_new: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
export const scene_rgba: (a: number, b: number) => [number, number];
export const scene_width: (a: number) => number;
export const score_counts: (a: bigint, b: bigint, c: bigint, d: bigint) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
