use overfit_core::analytic::*;
fn main() {
    let target = 3.0 / 252.0_f64.sqrt();
    let t1 = 252 * 100;
    for p in [1usize, 4, 10] {
        print!("p={p:>2}: ");
        for m in (1..=100).step_by(9) {
            match uniform_beta_for_target_eis(target, p, m, t1) {
                Ok(k) => {
                    let r = uniform_beta_replication(k, p, m, t1).unwrap();
                    print!("m={m}:r={r:.4} k={k:.4e}  ");
                }
                Err(e) => print!("m={m}:ERR({e})  "),
            }
        }
        println!();
    }
}
