public class Main {
    public static void main(String[] args) {
        int[] values = {3, 9, 4};
        int best = values[0];
        for (int v : values) {
            if (v > best) best = v;
        }
        System.out.println("Max: " + best);
    }
}
