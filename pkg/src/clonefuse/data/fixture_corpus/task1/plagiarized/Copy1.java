public class Main {
    public static void main(String[] args) {
        int total = 0;
        for (int k = 1; k <= 5; k++) {
            total = total + k;
        }
        System.out.println("Sum: " + total);
    }
}
