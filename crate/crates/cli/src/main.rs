fn main() {
    println!("irtk");
}
