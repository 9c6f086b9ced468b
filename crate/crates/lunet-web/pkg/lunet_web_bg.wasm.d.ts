/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_phantom_free: (a: number, b: number) => void;
export const __wbg_segmentation_free: (a: number, b: number) => void;
export const __wbg_trainer_free: (a: number, b: number) => void;
export const phantom_image: (a: number) => [number, number];
export const phantom_new: (a: number, b: number, c: number, d: number) => [number, number, number];
export const phantom_segment: (a: number, b: number, c: number, d: number) => [number, number, number];
export const phantom_size: (a: number) => number;
export const phantom_truth: (a: number) => [number, number];
export const segmentation_fwiou: (a: number) => number;
export const segmentation_mask: (a: number) => [number, number];
export const segmentation_mean_acc: (a: number) => number;
export const segmentation_mean_iou: (a: number) => number;
export const segmentation_pixel_acc: (a: number) => number;
export const trainer_new: (a: number, b: number, c: number, d: number) => [number, number, number];
export const trainer_predict: (a: number, b: number) => [number, number, number];
export const trainer_set_learning_rate: (a: number, b: number) => void;
export const trainer_step: (a: number) => [number, number, number];
export const trainer_steps: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
