/* tslint:disable */
/* eslint-disable */

export class Difference {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    binary_rgba(): Uint8Array;
    di_rgba(): Uint8Array;
    /**
     * Metrics of the Otsu map against the scene mask, as JSON percentages.
     */
    report(): string;
    threshold(): number;
}

export class Scene {
    free(): void;
    [Symbol.dispose](): void;
    changed_pixels(): number;
    /**
     * Difference image by `method` (lr, slr or msrdi) with its Otsu map.
     */
    difference(method: string): Difference;
    height(): number;
    constructor(size: number, changed_percent: number, looks: number, contrast: number, seed: bigint);
    /**
     * `which`: 1 or 2 for the acquisitions, anything else for the mask.
     */
    rgba(which: number): Uint8Array;
    width(): number;
}

/**
 * Metrics of raw confusion counts, as JSON percentages.
 */
export function score_counts(tp: bigint, fp: bigint, fn_: bigint, tn: bigint): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_difference_free: (a: number, b: number) => void;
    readonly __wbg_scene_free: (a: number, b: number) => void;
    readonly difference_binary_rgba: (a: number) => [number, number];
    readonly difference_di_rgba: (a: number) => [number, number];
    readonly difference_report: (a: number) => [number, number];
    readonly difference_threshold: (a: number) => number;
    readonly scene_changed_pixels: (a: number) => number;
    readonly scene_difference: (a: number, b: number, c: number) => [number, number, number];
    readonly scene_height: (a: number) => number;
    readonly scene_new: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
    readonly scene_rgba: (a: number, b: number) => [number, number];
    readonly scene_width: (a: number) => number;
    readonly score_counts: (a: bigint, b: bigint, c: bigint, d: bigint) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
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
