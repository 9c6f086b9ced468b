/* tslint:disable */
/* eslint-disable */

/**
 * One phantom slice and its tumor mask, both `size x size`.
 */
export class Phantom {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Intensities in `[0, 1]`, row-major.
     */
    image(): Float32Array;
    constructor(size: number, contrast: number, noise: number, seed: number);
    /**
     * Segments with `threshold`, `kmeans` or `fcm`.
     */
    segment(method: string, clusters: number): Segmentation;
    size(): number;
    truth(): Float32Array;
}

/**
 * A binary mask with its scores against the phantom's truth.
 */
export class Segmentation {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    mask(): Float32Array;
    readonly fwiou: number;
    readonly mean_acc: number;
    readonly mean_iou: number;
    readonly pixel_acc: number;
}

/**
 * U-Net trained on generated phantoms, one Adam step per call to `step`.
 */
export class Trainer {
    free(): void;
    [Symbol.dispose](): void;
    constructor(n_slices: number, size: number, base_filters: number, seed: number);
    /**
     * Thresholded prediction for `phantom`, scored against its truth.
     */
    predict(phantom: Phantom): Segmentation;
    /**
     * One minibatch update; returns its loss.
     */
    step(): number;
    set learning_rate(value: number);
    readonly steps: number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_phantom_free: (a: number, b: number) => void;
    readonly __wbg_segmentation_free: (a: number, b: number) => void;
    readonly __wbg_trainer_free: (a: number, b: number) => void;
    readonly phantom_image: (a: number) => [number, number];
    readonly phantom_new: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly phantom_segment: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly phantom_size: (a: number) => number;
    readonly phantom_truth: (a: number) => [number, number];
    readonly segmentation_fwiou: (a: number) => number;
    readonly segmentation_mask: (a: number) => [number, number];
    readonly segmentation_mean_acc: (a: number) => number;
    readonly segmentation_mean_iou: (a: number) => number;
    readonly segmentation_pixel_acc: (a: number) => number;
    readonly trainer_new: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly trainer_predict: (a: number, b: number) => [number, number, number];
    readonly trainer_set_learning_rate: (a: number, b: number) => void;
    readonly trainer_step: (a: number) => [number, number, number];
    readonly trainer_steps: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
