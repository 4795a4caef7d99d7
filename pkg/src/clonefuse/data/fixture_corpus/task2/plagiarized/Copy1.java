public class Main {
    // same loop, different names
    public static void main(String[] args) {
        long result = 1;
        for (int j = 2; j <= 5; j++) {
            result *= j;
        }
        System.out.println(result);
    }
}
