use std::time::Instant;

fn main() {
    let mut r = fdprox::rng::stream(1, 0);
    let a = fdprox::rng::normal_vec(&mut r, 200 * 200);
    let t = Instant::now();
    for _ in 0..10 {
        std::hint::black_box(fdprox::linalg::svd(&a, 200, 200).unwrap());
    }
    println!("svd 200x200: {:.1} ms", t.elapsed().as_secs_f64() * 100.0);
    let t = Instant::now();
    for _ in 0..10 {
        std::hint::black_box(fdprox::linalg::singular_values(&a, 200, 200).unwrap());
    }
    println!("singular values 200x200: {:.1} ms", t.elapsed().as_secs_f64() * 100.0);
}
