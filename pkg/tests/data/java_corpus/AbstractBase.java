package corpus.absbase;

public abstract class AbstractBase {
    protected String name;

    protected AbstractBase(String name) {
        this.name = name;
    }

    public abstract int weigh(String input);

    public int weighTwice(String input) {
        return weigh(input) * 2;
    }
}
