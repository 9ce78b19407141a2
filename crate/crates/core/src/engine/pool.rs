//! Per-thread recycling of large activation buffers.
//!
//! Forward passes allocate and free the same large tensors for every
//! image; recycling them avoids returning pages to the OS and faulting
//! them back in on the next pass.

use std::cell::RefCell;

use rustfft::num_complex::Complex64;

const KEEP: usize = 24;

thread_local! {
    static REAL: RefCell<Vec<Vec<f64>>> = const { RefCell::new(Vec::new()) };
    static COMPLEX: RefCell<Vec<Vec<Complex64>>> = const { RefCell::new(Vec::new()) };
}

fn take<T>(pool: &RefCell<Vec<Vec<T>>>, capacity: usize) -> Vec<T> {
    let mut pool = pool.borrow_mut();
    let best = pool
        .iter()
        .enumerate()
        .filter(|(_, v)| v.capacity() >= capacity)
        .min_by_key(|(_, v)| v.capacity())
        .map(|(i, _)| i);
    match best {
        Some(i) => {
            let mut v = pool.swap_remove(i);
            v.clear();
            v
        }
        None => Vec::with_capacity(capacity),
    }
}

fn give<T>(pool: &RefCell<Vec<Vec<T>>>, v: Vec<T>) {
    if v.capacity() < 1024 {
        return;
    }
    let mut pool = pool.borrow_mut();
    if pool.len() >= KEEP {
        let smallest = (0..pool.len()).min_by_key(|&i| pool[i].capacity()).unwrap();
        if pool[smallest].capacity() >= v.capacity() {
            return;
        }
        pool.swap_remove(smallest);
    }
    pool.push(v);
}

/// Empty vector with at least `capacity` reserved.
pub fn empty(capacity: usize) -> Vec<f64> {
    REAL.with(|p| take(p, capacity))
}

pub fn zeros(len: usize) -> Vec<f64> {
    let mut v = empty(len);
    v.resize(len, 0.0);
    v
}

pub fn recycle(v: Vec<f64>) {
    REAL.with(|p| give(p, v));
}

pub fn complex_zeros(len: usize) -> Vec<Complex64> {
    let mut v = COMPLEX.with(|p| take(p, len));
    v.resize(len, Complex64::new(0.0, 0.0));
    v
}

pub fn recycle_complex(v: Vec<Complex64>) {
    COMPLEX.with(|p| give(p, v));
}
