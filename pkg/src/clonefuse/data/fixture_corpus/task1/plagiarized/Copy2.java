public class Main {
    /* accumulate with a while loop */
    public static void main(String[] args) {
        int acc = 0;
        int n = 1;
        while (n <= 5) {
            acc += n;
            n++;
        }
        System.out.println("Sum: " + acc);
    }
}
