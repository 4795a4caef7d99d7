public class Main {
    public static void main(String[] args) {
        int sum = 0;
        for (int i = 1; i <= 5; i++) {
            sum = sum + i;
        }
        // print the total
        System.out.println("Sum: " + sum);
    }
}
