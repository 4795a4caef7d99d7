public class Main {
    public static void main(String[] args) {
        String word = "hello";
        String reversed = new StringBuilder(word).reverse().toString();
        System.out.println(reversed);
    }
}
