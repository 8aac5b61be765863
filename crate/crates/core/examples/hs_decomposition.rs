use nalgebra::dmatrix;
use triproxy::prob::VarSpace;
use triproxy::spectral::{construct_joint, hs_decompose, HsOptions};

fn main() -> triproxy::Result<()> {
    let fz = dmatrix![0.7, 0.1; 0.2, 0.3; 0.1, 0.6];
    let fc = dmatrix![0.6, 0.2; 0.4, 0.8];
    let fwv = dmatrix![0.8, 0.5, 0.1; 0.2, 0.5, 0.9];
    let fv = [0.3, 0.3, 0.4];
    let spaces = [VarSpace::indexed("Z", 3), VarSpace::indexed("C", 2), VarSpace::indexed("V", 3)];
    let joint = construct_joint(&fz, &fc, &fwv, &fv, spaces)?;

    let f = hs_decompose(&joint, "Z", "C", "V", &HsOptions::new(2))?;
    println!("f_Z|W recovered:{}", f.z_given_w.to_matrix());
    println!("f_C|W recovered:{}", f.c_given_w.to_matrix());
    println!("f_W|V recovered:{}", f.w_given_v.to_matrix());
    println!("{:#?}", f.diagnostics);
    Ok(())
}
