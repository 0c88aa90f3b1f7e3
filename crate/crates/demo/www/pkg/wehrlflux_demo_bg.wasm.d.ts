/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const dicke_critical_coupling: (a: number, b: number, c: number) => number;
export const dicke_scan: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
export const kerr_husimi: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const kerr_mean_field: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
